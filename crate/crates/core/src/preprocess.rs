//! Data preparation: CSV ingestion, log transforms, standardization, and the
//! sampling-adequacy checks run before any factor model is fitted.

use std::fmt;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{existence_slack, Dataset};

/// Relative eigenvalue tolerance below which a correlation matrix is singular.
pub const SINGULARITY_TOL: f64 = 1e-8;

/// Reads a CSV file with a header row of column names. Every cell must be a
/// finite decimal number; there are no missing-value codes.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file)
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<Dataset> {
    read_delimited(reader, b',')
}

/// Reads the tab-separated form written by [`write_tsv`].
pub fn read_tsv_from<R: Read>(reader: R) -> Result<Dataset> {
    read_delimited(reader, b'\t')
}

fn read_delimited<R: Read>(reader: R, delimiter: u8) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let p = names.len();
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))?;
        if record.len() != p {
            return Err(Error::Data(format!("row {} has {} fields, expected {p}", i + 1, record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Data(format!("row {}, column `{}`: `{field}` is not a number", i + 1, names[j]))
            })?;
            values.push(v);
        }
    }
    let n = values.len() / p.max(1);
    Dataset::new(names, DMatrix::from_row_slice(n, p, &values))
}

/// Writes the dataset as tab-separated text with full-precision values.
pub fn write_tsv(data: &Dataset) -> String {
    let mut out = data.names().join("\t");
    out.push('\n');
    for i in 0..data.n() {
        let row: Vec<String> = (0..data.p()).map(|j| data.values()[(i, j)].to_string()).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Replaces the named columns by their natural logarithm.
pub fn log_transform(data: &Dataset, columns: &[impl AsRef<str>]) -> Result<Dataset> {
    let mut values = data.values().clone();
    let mut meta = data.columns().to_vec();
    for name in columns {
        let name = name.as_ref();
        let j = data.column_index(name).ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        if meta[j].log_transformed {
            return Err(Error::AlreadyTransformed(name.to_string()));
        }
        for i in 0..data.n() {
            let v = values[(i, j)];
            if !(v > 0.0) {
                return Err(Error::NonPositive { column: name.to_string(), row: i + 1, value: v });
            }
            values[(i, j)] = v.ln();
        }
        meta[j].log_transformed = true;
    }
    Ok(data.with_values(values, meta, data.is_standardized()))
}

fn column_mean_sd(col: nalgebra::DVectorView<'_, f64>) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Centers each column and scales it to unit sample standard deviation
/// (denominator `n - 1`).
pub fn standardize(data: &Dataset) -> Result<Dataset> {
    if data.n() < 2 {
        return Err(Error::Data("standardization needs at least two rows".into()));
    }
    let mut values = data.values().clone();
    for j in 0..data.p() {
        let (mean, sd) = column_mean_sd(values.column(j));
        if !(sd > 0.0) || sd < 1e-12 * mean.abs() {
            return Err(Error::ConstantColumn(data.columns()[j].name.clone()));
        }
        for v in values.column_mut(j).iter_mut() {
            *v = (*v - mean) / sd;
        }
    }
    Ok(data.with_values(values, data.columns().to_vec(), true))
}

/// Sample correlation matrix `S` with its nonsingularity flag and KMO value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub values: DMatrix<f64>,
    pub nonsingular: bool,
    pub kmo: Option<f64>,
}

impl CorrelationMatrix {
    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.values.clone()).eigenvalues.min()
    }
}

/// Builds a correlation matrix from given values (unit diagonal expected).
pub fn correlation_from_values(values: DMatrix<f64>) -> CorrelationMatrix {
    let nonsingular = is_nonsingular(&values);
    let mut corr = CorrelationMatrix { values, nonsingular, kmo: None };
    corr.kmo = kmo(&corr).value();
    corr
}

fn is_nonsingular(values: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(values.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    hi > 0.0 && lo > SINGULARITY_TOL * hi
}

/// Pearson correlations between the columns of `data`.
pub fn correlation_matrix(data: &Dataset) -> CorrelationMatrix {
    let (n, p) = (data.n(), data.p());
    let mut centered = data.values().clone();
    let mut norms = vec![0.0; p];
    for j in 0..p {
        let mean = centered.column(j).sum() / n as f64;
        for v in centered.column_mut(j).iter_mut() {
            *v -= mean;
        }
        norms[j] = centered.column(j).norm();
    }
    let cross = centered.transpose() * &centered;
    let values = DMatrix::from_fn(p, p, |j, k| {
        if j == k {
            1.0
        } else if norms[j] > 0.0 && norms[k] > 0.0 {
            (cross[(j, k)] / (norms[j] * norms[k])).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    });
    let mut corr = correlation_from_values(values);
    if norms.contains(&0.0) {
        corr.nonsingular = false;
        corr.kmo = None;
    }
    corr
}

/// Kaiser-Meyer-Olkin measure of sampling adequacy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kmo {
    Defined(f64),
    Undefined(&'static str),
}

impl Kmo {
    pub fn value(self) -> Option<f64> {
        match self {
            Kmo::Defined(v) => Some(v),
            Kmo::Undefined(_) => None,
        }
    }
}

impl fmt::Display for Kmo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kmo::Defined(v) => write!(f, "{v:.3} ({})", kaiser_label(*v)),
            Kmo::Undefined(why) => write!(f, "undefined ({why})"),
        }
    }
}

/// Kaiser's conventional verbal label; no accept/reject decision is implied.
pub fn kaiser_label(kmo: f64) -> &'static str {
    match kmo {
        v if v >= 0.9 => "marvelous",
        v if v >= 0.8 => "meritorious",
        v if v >= 0.7 => "middling",
        v if v >= 0.6 => "mediocre",
        v if v >= 0.5 => "miserable",
        _ => "unacceptable",
    }
}

/// KMO from correlations and the partial correlations of the inverse matrix.
pub fn kmo(corr: &CorrelationMatrix) -> Kmo {
    if !corr.nonsingular {
        return Kmo::Undefined("singular correlation matrix");
    }
    let Some(chol) = corr.values.clone().cholesky() else {
        return Kmo::Undefined("singular correlation matrix");
    };
    let inv = chol.inverse();
    let p = corr.p();
    let (mut r2, mut q2) = (0.0, 0.0);
    for j in 0..p {
        for k in 0..p {
            if j != k {
                r2 += corr.values[(j, k)].powi(2);
                let q = -inv[(j, k)] / (inv[(j, j)] * inv[(k, k)]).sqrt();
                q2 += q * q;
            }
        }
    }
    if r2 + q2 == 0.0 {
        return Kmo::Undefined("no common variance");
    }
    Kmo::Defined(r2 / (r2 + q2))
}

/// Largest `m` with `(p - m)^2 - p - m >= 0`, or `None` when `p < 3`.
pub fn factor_upper_bound(p: usize) -> Option<usize> {
    if p < 3 {
        return None;
    }
    (1..p).take_while(|&m| existence_slack(p, m) >= 0).last()
}
