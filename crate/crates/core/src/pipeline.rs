//! The four-step workflow driven by a [`Config`], with every step persisting
//! its result in the output directory so later steps can resume.
//!
//! | step         | reads                              | writes            |
//! |--------------|------------------------------------|-------------------|
//! | `preprocess` | CSV from the config                | `data.tsv`, `preprocess.json` |
//! | `select-dim` | `data.tsv`                         | `dimension.json`  |
//! | `fit`        | `data.tsv`, `dimension.json`*      | `draws.tsv`       |
//! | `compare`    | `draws.tsv`, constraint models     | `comparison.json` |
//! | `report`     | whatever exists                    | `report/`         |
//!
//! (*) only when the config has no `[model]` block.
//!
//! Each step draws its random numbers from a seed derived from the master
//! seed and the step name, so [`Pipeline::all`] produces the same files as
//! running the steps one by one.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::compare::{compare_models, Comparison};
use crate::config::Config;
use crate::dimension::{select_dimension_with, DimensionReport};
use crate::dsl::{expand, parse_model_file};
use crate::error::{Error, Result};
use crate::preprocess::{correlation_matrix, log_transform, read_csv, read_tsv_from, standardize, write_tsv, CorrelationMatrix};
use crate::report::{posterior_summary, render_report, reproduced_residual, DataSummary, Provenance, Report, ReportInputs};
use crate::rng::derive_seed;
use crate::sampler::{gibbs_run_chains, read_draws, sample_prior, write_draws};
use crate::types::{Dataset, PosteriorDraws, UcfmSpec};

pub const DATA_FILE: &str = "data.tsv";
pub const PREPROCESS_FILE: &str = "preprocess.json";
pub const DIMENSION_FILE: &str = "dimension.json";
pub const DRAWS_FILE: &str = "draws.tsv";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const REPORT_DIR: &str = "report";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Preprocess,
    SelectDim,
    Fit,
    Compare,
    Report,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::Preprocess => "preprocess",
            Step::SelectDim => "select-dim",
            Step::Fit => "fit",
            Step::Compare => "compare",
            Step::Report => "report",
        }
    }
}

/// Persisted outcome of the preprocessing step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub summary: DataSummary,
    pub correlation: CorrelationMatrix,
}

/// What a step produced, for display by the caller.
#[derive(Clone, Debug)]
pub enum StepOutput {
    Preprocess(PreprocessRecord),
    SelectDim(DimensionReport),
    Fit(PosteriorDraws),
    Compare(Comparison),
    Report(Report),
}

pub struct Pipeline {
    pub config: Config,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &serde_json::to_string_pretty(value).expect("serializable"))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

impl Pipeline {
    pub fn new(config: Config) -> Self {
        Pipeline { config }
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn require(&self, name: &str, step: Step) -> Result<PathBuf> {
        let path = self.path(name);
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::MissingStep(format!("{} not found; run `{}` first", path.display(), step.name())))
        }
    }

    fn seed(&self, step: Step) -> u64 {
        derive_seed(self.config.seed, step.name(), 0)
    }

    pub fn run(&self, step: Step) -> Result<StepOutput> {
        Ok(match step {
            Step::Preprocess => StepOutput::Preprocess(self.preprocess()?),
            Step::SelectDim => StepOutput::SelectDim(self.select_dim()?),
            Step::Fit => StepOutput::Fit(self.fit()?),
            Step::Compare => StepOutput::Compare(self.compare()?),
            Step::Report => StepOutput::Report(self.report()?),
        })
    }

    /// Every step in order; `compare` only when the config names a model file.
    pub fn all(&self) -> Result<Report> {
        self.preprocess()?;
        self.select_dim()?;
        self.fit()?;
        if self.config.compare.is_some() {
            self.compare()?;
        }
        self.report()
    }

    /// Reads the CSV, log-transforms the configured columns and standardizes.
    pub fn preprocess(&self) -> Result<PreprocessRecord> {
        let raw = read_csv(&self.config.data.path)?;
        let logged = log_transform(&raw, &self.config.data.log_transform)?;
        let data = standardize(&logged)?;
        let correlation = correlation_matrix(&data);
        let summary = DataSummary {
            n: data.n(),
            names: data.names(),
            log_transformed: self.config.data.log_transform.clone(),
            nonsingular: correlation.nonsingular,
            kmo: correlation.kmo,
        };
        let record = PreprocessRecord { summary, correlation };
        write_file(&self.path(DATA_FILE), &write_tsv(&data))?;
        write_json(&self.path(PREPROCESS_FILE), &record)?;
        Ok(record)
    }

    fn data(&self) -> Result<Dataset> {
        let path = self.require(DATA_FILE, Step::Preprocess)?;
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        read_tsv_from(file)
    }

    pub fn select_dim(&self) -> Result<DimensionReport> {
        let data = self.data()?;
        let report = select_dimension_with(&data, &self.config.prior, &self.config.dimension_settings(), self.seed(Step::SelectDim))?;
        write_json(&self.path(DIMENSION_FILE), &report)?;
        Ok(report)
    }

    /// Base model from `[model]`, or the selected dimension with its anchors.
    fn base_spec(&self, p: usize) -> Result<UcfmSpec> {
        if let Some(spec) = self.config.base_spec(p)? {
            return Ok(spec);
        }
        let path = self.path(DIMENSION_FILE);
        if !path.exists() {
            return Err(Error::MissingStep(format!(
                "no [model] block in the config and {} not found; run `select-dim` first",
                path.display()
            )));
        }
        let report: DimensionReport = read_json(&path)?;
        let m = report.best();
        let entry = report.entries.iter().find(|e| e.m == m).expect("selected entry");
        UcfmSpec::anchored(p, &entry.anchors)
    }

    pub fn fit(&self) -> Result<PosteriorDraws> {
        let data = self.data()?;
        let spec = self.base_spec(data.p())?;
        let draws = gibbs_run_chains(&data, &spec, &self.config.prior, self.config.chain, self.seed(Step::Fit), self.config.chains)?;
        write_file(&self.path(DRAWS_FILE), &write_draws(&draws))?;
        Ok(draws)
    }

    fn draws(&self) -> Result<PosteriorDraws> {
        let path = self.require(DRAWS_FILE, Step::Fit)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        read_draws(&text)
    }

    /// Parses and expands every constraint model before anything is written.
    pub fn compare(&self) -> Result<Comparison> {
        let cfg = self.config.compare.as_ref().ok_or_else(|| Error::Config {
            path: "compare".into(),
            message: "no [compare] block; name a constraint model file".into(),
        })?;
        let text = std::fs::read_to_string(&cfg.models).map_err(|e| Error::io(&cfg.models, e))?;
        let named = parse_model_file(&text)?;
        let draws = self.draws()?;
        let models = named
            .iter()
            .map(|m| Ok((m.name.clone(), expand(&m.ast, &draws.spec)?)))
            .collect::<Result<Vec<_>>>()?;
        let prior = sample_prior(&draws.spec, &self.config.prior, cfg.prior_draws, self.seed(Step::Compare))?;
        let comparison = compare_models(&draws, &prior, &models, cfg.model_prior.as_deref())?;
        write_json(&self.path(COMPARISON_FILE), &comparison)?;
        Ok(comparison)
    }

    /// Gathers the persisted results of the completed steps.
    pub fn report_inputs(&self) -> Result<ReportInputs> {
        let c = &self.config;
        let mut provenance = Provenance::new(c.seed, c.prior.clone(), c.chain, c.chains);
        provenance.prior_draws = c.compare.as_ref().map(|cmp| cmp.prior_draws);
        let existing = |name: &str| Some(self.path(name)).filter(|p| p.exists());
        let pre: Option<PreprocessRecord> = existing(PREPROCESS_FILE).map(|p| read_json(&p)).transpose()?;
        let dimension = existing(DIMENSION_FILE).map(|p| read_json(&p)).transpose()?;
        let comparison = existing(COMPARISON_FILE).map(|p| read_json(&p)).transpose()?;
        let (summary, reproduced) = match existing(DRAWS_FILE) {
            Some(_) => {
                let s = posterior_summary(&self.draws()?)?;
                let r = pre.as_ref().map(|p| reproduced_residual(&p.correlation, &s.mean_params())).transpose()?;
                (Some(s), r)
            }
            None => (None, None),
        };
        Ok(ReportInputs { provenance, data: pre.map(|p| p.summary), dimension, summary, reproduced, comparison })
    }

    pub fn report(&self) -> Result<Report> {
        let inputs = self.report_inputs()?;
        let report = render_report(&inputs)?;
        report.write(&inputs, &self.path(REPORT_DIR))?;
        Ok(report)
    }
}
