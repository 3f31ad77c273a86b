//! Posterior summaries, reproduced/residual correlations and the rendered
//! report bundle.
//!
//! [`render_report`] is a pure function of [`ReportInputs`]; the bundle keeps
//! the inputs as `results.json` so a later render reproduces every file byte
//! for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::compare::Comparison;
use crate::dimension::{DimensionReport, ScreenOutcome};
use crate::error::{Error, Result};
use crate::preprocess::{kaiser_label, CorrelationMatrix};
use crate::sampler::{ChainSettings, PriorSpec};
use crate::stats::quantile_sorted;
use crate::types::{Cell, FactorParams, PosteriorDraws};

/// Minimum number of draws for [`posterior_summary`].
pub const SUMMARY_MIN_DRAWS: usize = 1000;

const FIXED: &str = "–";
const MISSING: &str = "NA";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Loading,
    FactorCorrelation,
    Uniqueness,
    Intercept,
}

/// One row of a posterior summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub kind: ParamKind,
    /// 0-based `(row, column)` for loadings and factor correlations;
    /// `(variable, 0)` otherwise.
    pub index: (usize, usize),
    /// Fixed at zero by the base model.
    pub fixed: bool,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ParamSummary {
    pub fn label(&self) -> String {
        let (a, b) = (self.index.0 + 1, self.index.1 + 1);
        match self.kind {
            ParamKind::Loading => format!("L[{a},{b}]"),
            ParamKind::FactorCorrelation => format!("Phi[{a},{b}]"),
            ParamKind::Uniqueness => format!("psi[{a}]"),
            ParamKind::Intercept => format!("mu[{a}]"),
        }
    }
}

/// Posterior means and equal-tailed 95% intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub p: usize,
    pub m: usize,
    pub draws: usize,
    /// Loadings factor by factor, then factor correlations, uniquenesses
    /// and intercepts.
    pub rows: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn loading(&self, j: usize, k: usize) -> &ParamSummary {
        &self.rows[k * self.p + j]
    }

    pub fn factor_correlations(&self) -> impl Iterator<Item = &ParamSummary> {
        self.rows.iter().filter(|r| r.kind == ParamKind::FactorCorrelation)
    }

    /// Posterior-mean parameters assembled from the table.
    pub fn mean_params(&self) -> FactorParams {
        let mut params = crate::sampler::null_params(self.p, self.m);
        for r in &self.rows {
            let (a, b) = r.index;
            match r.kind {
                ParamKind::Loading => params.lambda[(a, b)] = r.mean,
                ParamKind::FactorCorrelation => {
                    params.phi[(a, b)] = r.mean;
                    params.phi[(b, a)] = r.mean;
                }
                ParamKind::Uniqueness => params.psi[a] = r.mean,
                ParamKind::Intercept => params.mu[a] = r.mean,
            }
        }
        params
    }
}

fn summarize(kind: ParamKind, index: (usize, usize), mut values: Vec<f64>) -> ParamSummary {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(|a, b| a.total_cmp(b));
    ParamSummary {
        kind,
        index,
        fixed: false,
        mean,
        lower: quantile_sorted(&values, 0.025),
        upper: quantile_sorted(&values, 0.975),
    }
}

/// Mean and 2.5%/97.5% quantiles of every parameter; zero cells are flagged
/// as fixed.
pub fn posterior_summary(draws: &PosteriorDraws) -> Result<PosteriorSummary> {
    if draws.kept() < SUMMARY_MIN_DRAWS {
        return Err(Error::Precondition(format!(
            "posterior summary needs at least {SUMMARY_MIN_DRAWS} draws, got {}",
            draws.kept()
        )));
    }
    let (p, m) = (draws.spec.p(), draws.spec.m());
    let collect = |f: &dyn Fn(&FactorParams) -> f64| draws.draws.iter().map(f).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for k in 0..m {
        for j in 0..p {
            if draws.spec.is_zero(Cell::new(j, k)) {
                rows.push(ParamSummary {
                    kind: ParamKind::Loading,
                    index: (j, k),
                    fixed: true,
                    mean: 0.0,
                    lower: 0.0,
                    upper: 0.0,
                });
            } else {
                rows.push(summarize(ParamKind::Loading, (j, k), collect(&|d| d.lambda[(j, k)])));
            }
        }
    }
    for k in 0..m {
        for l in k + 1..m {
            rows.push(summarize(ParamKind::FactorCorrelation, (k, l), collect(&|d| d.phi[(k, l)])));
        }
    }
    for j in 0..p {
        rows.push(summarize(ParamKind::Uniqueness, (j, 0), collect(&|d| d.psi[j])));
    }
    for j in 0..p {
        rows.push(summarize(ParamKind::Intercept, (j, 0), collect(&|d| d.mu[j])));
    }
    Ok(PosteriorSummary { p, m, draws: draws.kept(), rows })
}

/// Model-implied and residual correlation matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproducedResidual {
    pub observed: DMatrix<f64>,
    pub reproduced: DMatrix<f64>,
    pub residual: DMatrix<f64>,
}

/// `reproduced = L Phi L' + Psi` at `params`; `residual = S - reproduced`,
/// diagonal included.
pub fn reproduced_residual(corr: &CorrelationMatrix, params: &FactorParams) -> Result<ReproducedResidual> {
    if corr.p() != params.p() {
        return Err(Error::Spec(format!(
            "correlation matrix has {} variables, parameters have {}",
            corr.p(),
            params.p()
        )));
    }
    let reproduced = params.implied_covariance();
    Ok(ReproducedResidual {
        observed: corr.values.clone(),
        residual: &corr.values - &reproduced,
        reproduced,
    })
}

/// Descriptive facts about the analysed data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n: usize,
    pub names: Vec<String>,
    pub log_transformed: Vec<String>,
    pub nonsingular: bool,
    pub kmo: Option<f64>,
}

/// Run settings recorded with every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub prior: PriorSpec,
    pub chain: ChainSettings,
    pub chains: usize,
    pub prior_draws: Option<usize>,
    pub version: String,
}

impl Provenance {
    pub fn new(seed: u64, prior: PriorSpec, chain: ChainSettings, chains: usize) -> Self {
        Provenance { seed, prior, chain, chains, prior_draws: None, version: env!("CARGO_PKG_VERSION").to_string() }
    }
}

/// Everything a report can show; absent steps are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub provenance: Provenance,
    pub data: Option<DataSummary>,
    pub dimension: Option<DimensionReport>,
    pub summary: Option<PosteriorSummary>,
    pub reproduced: Option<ReproducedResidual>,
    pub comparison: Option<Comparison>,
}

/// Rendered report: `summary.txt` plus one delimited file per table.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub files: BTreeMap<String, String>,
}

impl Report {
    pub fn text(&self) -> &str {
        &self.files["summary.txt"]
    }

    /// Writes the files and `results.json` into `dir`.
    pub fn write(&self, inputs: &ReportInputs, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(RESULTS_FILE);
        let json = serde_json::to_string_pretty(inputs).expect("report inputs serialize");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

/// File holding the serialized [`ReportInputs`] of a bundle.
pub const RESULTS_FILE: &str = "results.json";

/// Reads the inputs persisted by [`Report::write`].
pub fn read_inputs(dir: &Path) -> Result<ReportInputs> {
    let path = dir.join(RESULTS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn heading(out: &mut String, title: &str) {
    let _ = writeln!(out, "{title}\n{}\n", "-".repeat(title.chars().count()));
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn interval(r: &ParamSummary) -> String {
    if r.fixed {
        FIXED.to_string()
    } else {
        format!("{} [{}, {}]", fmt3(r.mean), fmt3(r.lower), fmt3(r.upper))
    }
}

fn pad_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        let _ = writeln!(out, "  {}", cells.join("  ").trim_end());
    }
    out
}

fn tsv(rows: &[Vec<String>]) -> String {
    rows.iter().map(|r| r.join("\t") + "\n").collect()
}

fn variable_names(inputs: &ReportInputs, p: usize) -> Vec<String> {
    match &inputs.data {
        Some(d) if d.names.len() == p => d.names.clone(),
        _ => crate::synthetic::generic_names(p),
    }
}

fn screen_text(s: &ScreenOutcome) -> &'static str {
    if s.passed() {
        "pass"
    } else {
        "rank-deficient"
    }
}

fn render_data(out: &mut String, d: &DataSummary) {
    heading(out, "Data");
    let _ = writeln!(out, "  n = {}, p = {}", d.n, d.names.len());
    if !d.log_transformed.is_empty() {
        let _ = writeln!(out, "  log-transformed: {}", d.log_transformed.join(", "));
    }
    let singular = if d.nonsingular { "nonsingular" } else { "singular" };
    let _ = writeln!(out, "  correlation matrix: {singular}");
    match d.kmo {
        Some(k) => {
            let _ = writeln!(out, "  KMO: {} ({})", fmt3(k), kaiser_label(k));
        }
        None => {
            let _ = writeln!(out, "  KMO: undefined");
        }
    }
    out.push('\n');
}

fn render_dimension(out: &mut String, files: &mut BTreeMap<String, String>, r: &DimensionReport) {
    heading(out, "Step 1: number of factors");
    let mut human = vec![vec!["m".into(), "screen".into(), "log m(X)".into(), "PMP".into()]];
    let mut machine = vec![vec!["m".into(), "anchors".into(), "screen".into(), "log_marginal".into(), "pmp".into()]];
    for e in &r.entries {
        let lm = e.log_marginal.map(|v| format!("{v:.2}"));
        human.push(vec![e.m.to_string(), screen_text(&e.screen).into(), lm.unwrap_or_else(|| FIXED.into()), fmt3(e.pmp)]);
        let anchors: Vec<String> = e.anchors.iter().map(|a| (a + 1).to_string()).collect();
        machine.push(vec![
            e.m.to_string(),
            anchors.join(","),
            screen_text(&e.screen).into(),
            e.log_marginal.map_or_else(|| MISSING.into(), |v| v.to_string()),
            e.pmp.to_string(),
        ]);
    }
    out.push_str(&pad_table(&human));
    for (m, why) in &r.excluded {
        let _ = writeln!(out, "  m = {m} excluded: {why}");
    }
    let _ = writeln!(out, "  selected: m = {}\n", r.best());
    files.insert("dimension.tsv".into(), tsv(&machine));
}

fn render_fit(out: &mut String, files: &mut BTreeMap<String, String>, s: &PosteriorSummary, names: &[String]) {
    heading(out, &format!("Step 2: unrestricted model (m = {})", s.m));
    let _ = writeln!(out, "  posterior mean [95% credible interval], {} draws\n", s.draws);
    let mut header = vec!["item".to_string()];
    header.extend((1..=s.m).map(|k| format!("Factor {k}")));
    header.push("psi".into());
    let mut human = vec![header];
    for j in 0..s.p {
        let mut row = vec![names[j].clone()];
        row.extend((0..s.m).map(|k| interval(s.loading(j, k))));
        row.push(interval(&s.rows[s.p * s.m + s.m * (s.m - 1) / 2 + j]));
        human.push(row);
    }
    out.push_str(&pad_table(&human));
    let phis: Vec<Vec<String>> = s.factor_correlations().map(|r| vec![r.label(), interval(r)]).collect();
    if !phis.is_empty() {
        let _ = writeln!(out, "\n  factor correlations");
        out.push_str(&pad_table(&phis));
    }
    out.push('\n');
    let mut machine = vec![["parameter", "item", "mean", "q025", "q975"].map(String::from).to_vec()];
    for r in &s.rows {
        let item = match r.kind {
            ParamKind::FactorCorrelation => String::new(),
            _ => names[r.index.0].clone(),
        };
        let nums = if r.fixed {
            vec![MISSING.to_string(); 3]
        } else {
            vec![r.mean.to_string(), r.lower.to_string(), r.upper.to_string()]
        };
        let mut row = vec![r.label(), item];
        row.extend(nums);
        machine.push(row);
    }
    files.insert("loadings.tsv".into(), tsv(&machine));
}

fn matrix_rows(mat: &DMatrix<f64>, names: &[String], cell: impl Fn(f64) -> String) -> Vec<Vec<String>> {
    let mut rows = vec![std::iter::once(String::new()).chain(names.iter().cloned()).collect::<Vec<_>>()];
    for i in 0..mat.nrows() {
        rows.push(std::iter::once(names[i].clone()).chain((0..mat.ncols()).map(|j| cell(mat[(i, j)]))).collect());
    }
    rows
}

fn render_reproduced(out: &mut String, files: &mut BTreeMap<String, String>, r: &ReproducedResidual, names: &[String]) {
    for (title, mat) in [("reproduced correlations", &r.reproduced), ("residual correlations", &r.residual)] {
        let _ = writeln!(out, "  {title}");
        out.push_str(&pad_table(&matrix_rows(mat, names, fmt3)));
        out.push('\n');
    }
    files.insert("reproduced.tsv".into(), tsv(&matrix_rows(&r.reproduced, names, |v| v.to_string())));
    files.insert("residual.tsv".into(), tsv(&matrix_rows(&r.residual, names, |v| v.to_string())));
}

fn render_comparison(out: &mut String, files: &mut BTreeMap<String, String>, c: &Comparison) {
    heading(out, "Step 3: constrained models");
    for m in &c.models {
        let _ = writeln!(out, "  [{}]", m.label);
        for line in m.constraints.lines() {
            let _ = writeln!(out, "    {line}");
        }
    }
    out.push('\n');
    heading(out, "Step 4: constrained-model selection");
    let mut human = vec![["model", "fit f", "complexity c", "BF vs unrestricted", "prior", "PMP"].map(String::from).to_vec()];
    let mut machine = vec![["model", "f", "c", "bf", "mc_se", "prior_prob", "pmp"].map(String::from).to_vec()];
    for (i, m) in c.models.iter().enumerate() {
        let (prior, post) = (c.result.prior_probs[i], c.result.posterior_probs[i]);
        human.push(vec![
            m.label.clone(),
            format!("{:.4}", m.bf.f),
            format!("{:.3e}", m.bf.c),
            format!("{:.3}", m.bf.bf),
            fmt3(prior),
            format!("{post:.4}"),
        ]);
        machine.push(vec![
            m.label.clone(),
            m.bf.f.to_string(),
            m.bf.c.to_string(),
            m.bf.bf.to_string(),
            m.bf.mc_se.to_string(),
            prior.to_string(),
            post.to_string(),
        ]);
    }
    out.push_str(&pad_table(&human));
    out.push('\n');
    files.insert("comparison.tsv".into(), tsv(&machine));
}

fn render_provenance(p: &Provenance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "seed\t{}", p.seed);
    let _ = writeln!(out, "loading_variance\t{}", p.prior.loading_variance);
    let _ = writeln!(out, "psi_shape\t{}", p.prior.psi_shape);
    let _ = writeln!(out, "psi_rate\t{}", p.prior.psi_rate);
    let df = p.prior.phi_df.map_or_else(|| "m+2".to_string(), |v| v.to_string());
    let _ = writeln!(out, "phi_df\t{df}");
    let tf = p.prior.training_fraction.map_or_else(|| "2 x free parameters".to_string(), |v| v.to_string());
    let _ = writeln!(out, "training\t{tf}");
    let _ = writeln!(out, "iterations\t{}", p.chain.iterations);
    let _ = writeln!(out, "burn_in\t{}", p.chain.burn_in);
    let _ = writeln!(out, "chains\t{}", p.chains);
    if let Some(n) = p.prior_draws {
        let _ = writeln!(out, "prior_draws\t{n}");
    }
    let _ = writeln!(out, "version\tbayes-cfa {}", p.version);
    out
}

/// Renders whichever steps are present, in workflow order.
pub fn render_report(inputs: &ReportInputs) -> Result<Report> {
    if inputs.dimension.is_none() && inputs.summary.is_none() && inputs.comparison.is_none() && inputs.data.is_none() {
        return Err(Error::MissingStep("nothing to report; run at least one step first".into()));
    }
    let mut files = BTreeMap::new();
    let mut out = String::from("Bayesian factor analysis report\n\n");
    if let Some(d) = &inputs.data {
        render_data(&mut out, d);
    }
    if let Some(r) = &inputs.dimension {
        render_dimension(&mut out, &mut files, r);
    }
    if let Some(s) = &inputs.summary {
        let names = variable_names(inputs, s.p);
        render_fit(&mut out, &mut files, s, &names);
        if let Some(r) = &inputs.reproduced {
            render_reproduced(&mut out, &mut files, r, &names);
        }
    }
    if let Some(c) = &inputs.comparison {
        render_comparison(&mut out, &mut files, c);
    }
    let provenance = render_provenance(&inputs.provenance);
    heading(&mut out, "Provenance");
    for line in provenance.lines() {
        let _ = writeln!(out, "  {}", line.replace('\t', ": "));
    }
    files.insert("summary.txt".into(), out);
    files.insert("provenance.txt".into(), provenance);
    Ok(Report { files })
}
