//! Shared domain types and their structural validation.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dsl::{lex, ParseError, Tok, TokenCursor};
use crate::error::{Error, Result};

/// Loading-matrix cell, 0-based internally; displayed 1-based as `L[j,k]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    /// Builds a cell from the 1-based indices used in text.
    pub fn one_based(j: usize, k: usize) -> Option<Self> {
        (j >= 1 && k >= 1).then(|| Cell::new(j - 1, k - 1))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L[{},{}]", self.row + 1, self.col + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub log_transformed: bool,
}

/// `n x p` observation matrix with per-column metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    columns: Vec<Column>,
    standardized: bool,
}

impl Dataset {
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        let columns = names
            .into_iter()
            .map(|name| Column { name, log_transformed: false })
            .collect();
        Self::from_parts(values, columns, false)
    }

    pub fn from_parts(values: DMatrix<f64>, columns: Vec<Column>, standardized: bool) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Data("dataset must have at least one row and one column".into()));
        }
        if columns.len() != values.ncols() {
            return Err(Error::Data(format!(
                "{} column names for {} columns",
                columns.len(),
                values.ncols()
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Data(format!("duplicate column name `{}`", c.name)));
            }
        }
        for (j, col) in values.column_iter().enumerate() {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "non-finite value in column `{}` at row {}",
                    columns[j].name,
                    i + 1
                )));
            }
        }
        Ok(Dataset { values, columns, standardized })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Subset of rows, in the order given. Metadata is carried over.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let values = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.values[(rows[i], j)]);
        Dataset { values, columns: self.columns.clone(), standardized: self.standardized }
    }

    pub(crate) fn with_values(&self, values: DMatrix<f64>, columns: Vec<Column>, standardized: bool) -> Dataset {
        Dataset { values, columns, standardized }
    }
}

/// Unrestricted confirmatory factor model: factor count plus the minimal
/// identification restrictions on the loading matrix.
///
/// The identification rule used throughout: every factor `k` has an anchor
/// variable `a_k` with `L[a_k,k] > 0` and `L[a_k,l] = 0` for `l != k`; anchors
/// are distinct variables. Additional zero cells are accepted. With `m = 0`
/// the spec describes the independence model (no common factors).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UcfmSpec {
    p: usize,
    m: usize,
    zero_cells: BTreeSet<Cell>,
    positive_cells: BTreeSet<Cell>,
}

/// One violated invariant reported by [`validate_spec`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    FactorCount,
    ExistenceBound { p: usize, m: usize },
    DimensionMismatch { spec_p: usize, data_p: usize },
    CellOutOfRange(Cell),
    CellConflict(Cell),
    Identification(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FactorCount => f.write_str("factor count: at least one factor required"),
            Violation::ExistenceBound { p, m } => {
                let slack = (*p as i64 - *m as i64).pow(2) - *p as i64 - *m as i64;
                write!(f, "existence bound: (p-m)^2-p-m = {slack} < 0 for p={p}, m={m}")
            }
            Violation::DimensionMismatch { spec_p, data_p } => {
                write!(f, "dimension mismatch: spec has {spec_p} variables, data has {data_p}")
            }
            Violation::CellOutOfRange(c) => write!(f, "cell out of range: {c}"),
            Violation::CellConflict(c) => write!(f, "cell conflict: {c} is both zero and positive"),
            Violation::Identification(msg) => write!(f, "identification: {msg}"),
        }
    }
}

/// Degrees-of-freedom slack `(p-m)^2 - p - m`.
pub fn existence_slack(p: usize, m: usize) -> i64 {
    let (p, m) = (p as i64, m as i64);
    (p - m).pow(2) - p - m
}

impl UcfmSpec {
    pub fn new(
        p: usize,
        m: usize,
        zero_cells: impl IntoIterator<Item = Cell>,
        positive_cells: impl IntoIterator<Item = Cell>,
    ) -> Self {
        UcfmSpec {
            p,
            m,
            zero_cells: zero_cells.into_iter().collect(),
            positive_cells: positive_cells.into_iter().collect(),
        }
    }

    /// Minimal spec from 0-based anchor rows, one per factor.
    pub fn anchored(p: usize, anchors: &[usize]) -> Result<Self> {
        let m = anchors.len();
        let mut zeros = Vec::new();
        let mut positives = Vec::new();
        for (k, &a) in anchors.iter().enumerate() {
            positives.push(Cell::new(a, k));
            zeros.extend((0..m).filter(|&l| l != k).map(|l| Cell::new(a, l)));
        }
        let spec = UcfmSpec::new(p, m, zeros, positives);
        let problems = spec.structural_violations();
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(Error::Spec(join_violations(&problems)))
        }
    }

    /// Model without common factors.
    pub fn independence(p: usize) -> Self {
        UcfmSpec::new(p, 0, [], [])
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn zero_cells(&self) -> &BTreeSet<Cell> {
        &self.zero_cells
    }

    pub fn positive_cells(&self) -> &BTreeSet<Cell> {
        &self.positive_cells
    }

    pub fn is_zero(&self, cell: Cell) -> bool {
        self.zero_cells.contains(&cell)
    }

    pub fn is_positive(&self, cell: Cell) -> bool {
        self.positive_cells.contains(&cell)
    }

    /// Free (not zero-fixed) columns of loading row `j`.
    pub fn free_in_row(&self, j: usize) -> Vec<usize> {
        (0..self.m).filter(|&k| !self.is_zero(Cell::new(j, k))).collect()
    }

    /// Anchor row of each factor, if the positive cells are one per column.
    pub fn anchors(&self) -> Option<Vec<usize>> {
        let mut anchors = vec![None; self.m];
        for c in &self.positive_cells {
            if c.col >= self.m || anchors[c.col].replace(c.row).is_some() {
                return None;
            }
        }
        anchors.into_iter().collect()
    }

    /// Number of free parameters: mu, psi, free loadings and factor correlations.
    pub fn free_parameter_count(&self) -> usize {
        2 * self.p + self.p * self.m - self.zero_cells.len() + self.m * self.m.saturating_sub(1) / 2
    }

    fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for c in self.zero_cells.iter().chain(&self.positive_cells) {
            if c.row >= self.p || c.col >= self.m {
                out.push(Violation::CellOutOfRange(*c));
            }
        }
        for c in self.zero_cells.intersection(&self.positive_cells) {
            out.push(Violation::CellConflict(*c));
        }
        if self.m == 0 {
            if !self.zero_cells.is_empty() || !self.positive_cells.is_empty() {
                out.push(Violation::Identification(
                    "independence model cannot restrict loadings".into(),
                ));
            }
            return out;
        }
        match self.anchors() {
            None => out.push(Violation::Identification(
                "each factor needs exactly one positive (polarity) cell".into(),
            )),
            Some(anchors) => {
                let distinct: BTreeSet<_> = anchors.iter().collect();
                if distinct.len() != anchors.len() {
                    out.push(Violation::Identification(
                        "anchor variables of different factors must be distinct".into(),
                    ));
                }
                for (k, &a) in anchors.iter().enumerate() {
                    for l in (0..self.m).filter(|&l| l != k) {
                        if !self.is_zero(Cell::new(a, l)) {
                            out.push(Violation::Identification(format!(
                                "anchor {} of factor {} needs {} = 0",
                                a + 1,
                                k + 1,
                                Cell::new(a, l)
                            )));
                        }
                    }
                }
            }
        }
        out
    }

    /// Text form: `factors`, `variables`, then `L[j,k] = 0` and `L[j,k] > 0` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("factors {}\nvariables {}\n", self.m, self.p);
        for c in &self.zero_cells {
            out.push_str(&format!("{c} = 0\n"));
        }
        for c in &self.positive_cells {
            out.push_str(&format!("{c} > 0\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ParseError> {
        let mut cur = TokenCursor::new(lex(text, 1)?);
        let mut m = None;
        let mut p = None;
        let mut zeros = Vec::new();
        let mut positives = Vec::new();
        cur.skip_separators();
        while !cur.at(&Tok::Eof) {
            match cur.peek().kind.clone() {
                Tok::Ident(word) if word == "factors" || word == "variables" => {
                    cur.next();
                    let tok = cur.next();
                    let value = match tok.kind {
                        Tok::Number { value, integral: true } => value as usize,
                        other => {
                            return Err(ParseError {
                                line: tok.line,
                                column: tok.column,
                                message: format!("expected integer, found {other}"),
                            })
                        }
                    };
                    if word == "factors" {
                        m = Some(value);
                    } else {
                        p = Some(value);
                    }
                }
                Tok::Ident(word) if word == "L" => {
                    let (j, k, _) = cur.cell_indices()?;
                    let cell = Cell::new(j - 1, k - 1);
                    let op = cur.next();
                    let zero = cur.peek().clone();
                    match zero.kind {
                        Tok::Number { value, .. } if value == 0.0 => {
                            cur.next();
                        }
                        _ => return Err(cur.error("`0`")),
                    }
                    match op.kind {
                        Tok::Equals => zeros.push(cell),
                        Tok::Greater => positives.push(cell),
                        other => {
                            return Err(ParseError {
                                line: op.line,
                                column: op.column,
                                message: format!("expected `=` or `>`, found {other}"),
                            })
                        }
                    }
                }
                _ => return Err(cur.error("`factors`, `variables` or a cell restriction")),
            }
            if !matches!(cur.peek().kind, Tok::Newline | Tok::Semicolon | Tok::Eof) {
                return Err(cur.error("end of line"));
            }
            cur.skip_separators();
        }
        let missing = |what: &str| ParseError {
            line: 1,
            column: 1,
            message: format!("missing `{what}` line"),
        };
        let m = m.ok_or_else(|| missing("factors"))?;
        let p = p.ok_or_else(|| missing("variables"))?;
        Ok(UcfmSpec::new(p, m, zeros, positives))
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Checks a spec against the dataset it will be fitted to. Returns every
/// violated invariant; an empty list means the pair is valid.
pub fn validate_spec(spec: &UcfmSpec, data: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.p != data.p() {
        out.push(Violation::DimensionMismatch { spec_p: spec.p, data_p: data.p() });
    }
    if spec.m >= 1 && existence_slack(data.p(), spec.m) < 0 {
        out.push(Violation::ExistenceBound { p: data.p(), m: spec.m });
    }
    out.extend(spec.structural_violations());
    out
}

/// Like [`validate_spec`] but turns violations into an error.
pub fn ensure_valid(spec: &UcfmSpec, data: &Dataset) -> Result<()> {
    let v = validate_spec(spec, data);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Spec(join_violations(&v)))
    }
}

/// One parameter state of the oblique factor model.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorParams {
    pub mu: DVector<f64>,
    pub lambda: DMatrix<f64>,
    /// Diagonal of the uniqueness matrix.
    pub psi: DVector<f64>,
    /// Factor correlation matrix (unit diagonal).
    pub phi: DMatrix<f64>,
}

impl FactorParams {
    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn m(&self) -> usize {
        self.lambda.ncols()
    }

    /// `Lambda Phi Lambda^T + Psi`.
    pub fn implied_covariance(&self) -> DMatrix<f64> {
        let common = &self.lambda * &self.phi * self.lambda.transpose();
        let mut sigma = (&common + common.transpose()) * 0.5;
        for j in 0..self.p() {
            sigma[(j, j)] += self.psi[j];
        }
        sigma
    }

    /// Checks positivity of uniquenesses, the correlation form of `phi`
    /// and, when given, the zero/positive cells of `spec`.
    pub fn validate(&self, spec: Option<&UcfmSpec>) -> std::result::Result<(), String> {
        let (p, m) = (self.p(), self.m());
        if self.lambda.nrows() != p || self.psi.len() != p || self.phi.shape() != (m, m) {
            return Err("inconsistent dimensions".into());
        }
        if let Some(j) = self.psi.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(format!("psi[{}] = {} is not positive", j + 1, self.psi[j]));
        }
        if self.lambda.iter().chain(self.mu.iter()).any(|v| !v.is_finite()) {
            return Err("non-finite loading or intercept".into());
        }
        for k in 0..m {
            if self.phi[(k, k)] != 1.0 {
                return Err(format!("phi[{0},{0}] = {1} is not 1", k + 1, self.phi[(k, k)]));
            }
            for l in 0..k {
                if self.phi[(k, l)] != self.phi[(l, k)] {
                    return Err("phi is not symmetric".into());
                }
            }
        }
        if m > 0 && self.phi.clone().cholesky().is_none() {
            return Err("phi is not positive definite".into());
        }
        if let Some(spec) = spec {
            if spec.p() != p || spec.m() != m {
                return Err("parameter dimensions differ from the spec".into());
            }
            for c in spec.zero_cells() {
                if self.lambda[(c.row, c.col)] != 0.0 {
                    return Err(format!("{c} must be exactly 0"));
                }
            }
            for c in spec.positive_cells() {
                if !(self.lambda[(c.row, c.col)] > 0.0) {
                    return Err(format!("{c} must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Retained posterior draws from one or more chains.
#[derive(Clone, Debug)]
pub struct PosteriorDraws {
    pub spec: UcfmSpec,
    pub draws: Vec<FactorParams>,
    /// Per-draw factor scores (`n x m`), kept only on request.
    pub factor_scores: Option<Vec<DMatrix<f64>>>,
    pub seed: u64,
    pub burn_in: usize,
    pub chains: usize,
}

impl PosteriorDraws {
    pub fn kept(&self) -> usize {
        self.draws.len()
    }

    /// Element-wise posterior mean. `phi` stays a correlation matrix.
    pub fn mean(&self) -> FactorParams {
        let first = &self.draws[0];
        let g = self.draws.len() as f64;
        let mut mean = FactorParams {
            mu: DVector::zeros(first.p()),
            lambda: DMatrix::zeros(first.p(), first.m()),
            psi: DVector::zeros(first.p()),
            phi: DMatrix::zeros(first.m(), first.m()),
        };
        for d in &self.draws {
            mean.mu += &d.mu;
            mean.lambda += &d.lambda;
            mean.psi += &d.psi;
            mean.phi += &d.phi;
        }
        mean.mu /= g;
        mean.lambda /= g;
        mean.psi /= g;
        mean.phi /= g;
        for k in 0..first.m() {
            mean.phi[(k, k)] = 1.0;
            for l in 0..k {
                let v = 0.5 * (mean.phi[(k, l)] + mean.phi[(l, k)]);
                mean.phi[(k, l)] = v;
                mean.phi[(l, k)] = v;
            }
        }
        mean
    }
}

/// Independent prior draws of loadings and factor correlations, stored flat.
#[derive(Clone, Debug)]
pub struct PriorDraws {
    pub p: usize,
    pub m: usize,
    /// Column-major `p x m` blocks, one per draw.
    pub lambda: Vec<f64>,
    /// Strict lower triangle of each correlation matrix, row by row.
    pub phi_lower: Vec<f64>,
    pub seed: u64,
}

impl PriorDraws {
    pub fn len(&self) -> usize {
        self.lambda.len().checked_div(self.p * self.m).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lambda(&self, i: usize) -> DMatrix<f64> {
        let size = self.p * self.m;
        DMatrix::from_column_slice(self.p, self.m, &self.lambda[i * size..(i + 1) * size])
    }

    pub fn phi(&self, i: usize) -> DMatrix<f64> {
        let d = self.m * (self.m - 1) / 2;
        let lower = &self.phi_lower[i * d..(i + 1) * d];
        let mut phi = DMatrix::identity(self.m, self.m);
        let mut idx = 0;
        for k in 1..self.m {
            for l in 0..k {
                phi[(k, l)] = lower[idx];
                phi[(l, k)] = lower[idx];
                idx += 1;
            }
        }
        phi
    }
}

/// Outcome of comparing a batch of models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub labels: Vec<String>,
    /// Bayes factors against the common encompassing model (or log marginals).
    pub log_marginals_or_bfs: Vec<f64>,
    pub prior_probs: Vec<f64>,
    pub posterior_probs: Vec<f64>,
}

impl ComparisonResult {
    pub fn check(&self) -> std::result::Result<(), String> {
        for (name, v) in [("prior", &self.prior_probs), ("posterior", &self.posterior_probs)] {
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(format!("{name} probabilities outside [0,1]"));
            }
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(format!("{name} probabilities sum to {s}"));
            }
        }
        Ok(())
    }
}
