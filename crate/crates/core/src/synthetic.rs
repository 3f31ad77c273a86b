//! Synthetic factor structures used by the examples, the bundled dataset and
//! the recovery experiments.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::preprocess::standardize;
use crate::sampler::simulate;
use crate::types::{Dataset, FactorParams, UcfmSpec};

/// Names of the eight metabolic indicators, in loading-row order.
pub const METABOLIC_NAMES: [&str; 8] = ["BMI", "trig", "HDL", "IR", "GB", "G2", "SBP", "DBP"];

/// Posterior-mean loadings of the two-factor glucose/lipid solution for the
/// eight metabolic indicators (rows as in [`METABOLIC_NAMES`]). Zero cells
/// are the anchor restrictions `L[3,1]` and `L[5,2]`.
pub const METABOLIC_LOADINGS: [[f64; 2]; 8] = [
    [0.324, -0.068],
    [-0.006, -0.653],
    [0.0, 0.706],
    [0.767, -0.179],
    [0.470, 0.0],
    [0.355, -0.124],
    [0.274, 0.029],
    [0.202, 0.139],
];

/// Posterior-mean correlation between the glucose and lipid factors.
pub const METABOLIC_FACTOR_CORRELATION: f64 = -0.277;

fn params_from(loadings: &[[f64; 2]], phi12: f64) -> FactorParams {
    let p = loadings.len();
    let lambda = DMatrix::from_fn(p, 2, |j, k| loadings[j][k]);
    let phi = DMatrix::from_row_slice(2, 2, &[1.0, phi12, phi12, 1.0]);
    let communality = (&lambda * &phi * lambda.transpose()).diagonal();
    FactorParams {
        mu: DVector::zeros(p),
        psi: communality.map(|h| 1.0 - h),
        lambda,
        phi,
    }
}

/// Metabolic two-factor solution with uniquenesses `1 - communality`.
pub fn metabolic_reference() -> FactorParams {
    params_from(&METABOLIC_LOADINGS, METABOLIC_FACTOR_CORRELATION)
}

/// Anchor restrictions of the metabolic model: HDL anchors the lipid
/// factor, GB the glucose factor.
pub fn metabolic_spec() -> UcfmSpec {
    UcfmSpec::anchored(8, &[4, 2]).expect("valid anchors")
}

/// Simple-structure two-factor model on eight variables: variables 1-4
/// load on factor 1, 5-8 on factor 2, factor correlation 0.3.
pub fn simple_two_factor() -> FactorParams {
    let loadings = [
        [0.70, 0.0],
        [0.60, 0.0],
        [0.65, 0.0],
        [0.55, 0.0],
        [0.0, 0.70],
        [0.0, 0.60],
        [0.0, 0.55],
        [0.0, 0.65],
    ];
    params_from(&loadings, 0.3)
}

/// Two-factor model whose first column is a scaled copy of the second, so
/// the loading matrix has rank one.
pub fn rank_one_two_factor() -> FactorParams {
    let loadings: Vec<[f64; 2]> = [0.7, 0.6, 0.65, 0.55, 0.7, 0.6, 0.55, 0.65]
        .iter()
        .map(|&l| [l, 0.0])
        .collect();
    params_from(&loadings, 0.0)
}

/// Simulates `n` rows from `params` and returns the standardized dataset.
pub fn dataset(
    params: &FactorParams,
    names: &[&str],
    n: usize,
    extra_error_cov: Option<(usize, usize, f64)>,
    seed: u64,
) -> Result<Dataset> {
    let x = simulate(params, n, extra_error_cov, seed)?;
    let raw = Dataset::new(names.iter().map(|s| s.to_string()).collect(), x)?;
    standardize(&raw)
}

/// Generic variable names `x1..xp`.
pub fn generic_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}
