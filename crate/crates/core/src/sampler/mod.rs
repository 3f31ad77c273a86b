//! Posterior and prior simulation for the factor model.

pub(crate) mod gibbs;
mod dump;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, ChainRng};
use crate::stats::{chol_log_det, correlation_from_inverse_wishart, std_normal, LN_2PI};
use crate::types::{ensure_valid, Cell, Dataset, FactorParams, PosteriorDraws, PriorDraws, UcfmSpec};
pub use dump::{read_draws, write_draws};
pub(crate) use gibbs::{Fixed, Model, State};

/// Hyperparameters of the diffuse conjugate-style priors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    /// Variance of the normal prior on free loadings and intercepts.
    #[serde(default = "defaults::loading_variance")]
    pub loading_variance: f64,
    #[serde(default = "defaults::psi_hyper")]
    pub psi_shape: f64,
    #[serde(default = "defaults::psi_hyper")]
    pub psi_rate: f64,
    /// Degrees of freedom of the inverse Wishart whose correlation matrix is
    /// the factor-correlation prior; `None` means `m + 2`.
    #[serde(default)]
    pub phi_df: Option<f64>,
    /// Share of rows used as training sample; `None` picks the smallest
    /// share giving at least twice as many rows as free parameters.
    #[serde(default)]
    pub training_fraction: Option<f64>,
}

mod defaults {
    pub fn loading_variance() -> f64 {
        100.0
    }
    pub fn psi_hyper() -> f64 {
        0.01
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            loading_variance: defaults::loading_variance(),
            psi_shape: defaults::psi_hyper(),
            psi_rate: defaults::psi_hyper(),
            phi_df: None,
            training_fraction: None,
        }
    }
}

impl PriorSpec {
    pub fn phi_df_for(&self, m: usize) -> f64 {
        self.phi_df.unwrap_or(m as f64 + 2.0)
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let positive = [
            ("loading_variance", self.loading_variance),
            ("psi_shape", self.psi_shape),
            ("psi_rate", self.psi_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Spec(format!("prior {name} must be positive, got {v}")));
            }
        }
        let df = self.phi_df_for(m);
        if m > 1 && !(df > m as f64 - 1.0) {
            return Err(Error::Spec(format!("prior phi_df must exceed m - 1 = {}, got {df}", m - 1)));
        }
        if let Some(f) = self.training_fraction {
            if !(f > 0.0 && f <= 0.5) {
                return Err(Error::Spec(format!("training_fraction must lie in (0, 0.5], got {f}")));
            }
        }
        Ok(())
    }

    /// Number of training rows for a model with `free_params` parameters.
    pub fn training_rows(&self, n: usize, free_params: usize) -> usize {
        let rows = match self.training_fraction {
            Some(f) => (f * n as f64).ceil() as usize,
            None => 2 * free_params,
        };
        rows.clamp(1, n / 2)
    }
}

/// Chain length; `iterations` includes the burn-in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    pub iterations: usize,
    pub burn_in: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        ChainSettings { iterations: 50_000, burn_in: 10_000 }
    }
}

impl ChainSettings {
    pub fn new(iterations: usize, burn_in: usize) -> Self {
        ChainSettings { iterations, burn_in }
    }

    pub fn kept(&self) -> usize {
        self.iterations - self.burn_in
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Spec(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        Ok(())
    }
}

/// `Sigma = Lambda Phi Lambda^T + Psi`.
pub fn implied_covariance(params: &FactorParams) -> DMatrix<f64> {
    params.implied_covariance()
}

/// Log likelihood of the data with factor scores integrated out:
/// `sum_i log N_p(z_i; mu, Lambda Phi Lambda^T + Psi)`.
pub fn observed_loglik(params: &FactorParams, data: &Dataset) -> Result<f64> {
    observed_loglik_matrix(params, data.values())
}

/// [`observed_loglik`] on a bare `n x p` matrix.
pub fn observed_loglik_matrix(params: &FactorParams, x: &DMatrix<f64>) -> Result<f64> {
    let sigma = params.implied_covariance();
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Numerical("implied covariance is not positive definite".into()))?;
    let (n, p) = (x.nrows(), x.ncols());
    let mut centered = x.transpose();
    for i in 0..n {
        for j in 0..p {
            centered[(j, i)] -= params.mu[j];
        }
    }
    chol.l().solve_lower_triangular_mut(&mut centered);
    let quad = centered.norm_squared();
    Ok(-0.5 * (n as f64 * (p as f64 * LN_2PI + chol_log_det(&chol.l())) + quad))
}

/// Runs one chain; retained draws are those after `burn_in`.
pub fn gibbs_run(
    data: &Dataset,
    spec: &UcfmSpec,
    prior: &PriorSpec,
    settings: ChainSettings,
    seed: u64,
) -> Result<PosteriorDraws> {
    gibbs_run_chains(data, spec, prior, settings, seed, 1)
}

/// Runs `chains` independent chains in parallel and concatenates their
/// retained draws in chain order.
pub fn gibbs_run_chains(
    data: &Dataset,
    spec: &UcfmSpec,
    prior: &PriorSpec,
    settings: ChainSettings,
    seed: u64,
    chains: usize,
) -> Result<PosteriorDraws> {
    ensure_valid(spec, data)?;
    prior.validate(spec.m())?;
    settings.validate()?;
    let chains = chains.max(1);
    let model = Model::new(data.values(), spec, prior);
    let runs: Vec<Result<Vec<FactorParams>>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, "chain", c as u64);
            let mut draws = Vec::with_capacity(settings.kept());
            run_chain(&model, settings, Fixed::default(), model.initial_state(), &mut rng, |s| {
                draws.push(s.params.clone())
            })?;
            Ok(draws)
        })
        .collect();
    let mut draws = Vec::with_capacity(settings.kept() * chains);
    for run in runs {
        draws.extend(run?);
    }
    Ok(PosteriorDraws {
        spec: spec.clone(),
        draws,
        factor_scores: None,
        seed,
        burn_in: settings.burn_in,
        chains,
    })
}

/// Like [`gibbs_run`] but also keeps the factor scores of every retained draw.
pub fn gibbs_run_with_scores(
    data: &Dataset,
    spec: &UcfmSpec,
    prior: &PriorSpec,
    settings: ChainSettings,
    seed: u64,
) -> Result<PosteriorDraws> {
    ensure_valid(spec, data)?;
    prior.validate(spec.m())?;
    settings.validate()?;
    let model = Model::new(data.values(), spec, prior);
    let mut rng = stream(seed, "chain", 0);
    let mut draws = Vec::with_capacity(settings.kept());
    let mut scores = Vec::with_capacity(settings.kept());
    run_chain(&model, settings, Fixed::default(), model.initial_state(), &mut rng, |s| {
        draws.push(s.params.clone());
        scores.push(s.xi.clone());
    })?;
    Ok(PosteriorDraws {
        spec: spec.clone(),
        draws,
        factor_scores: Some(scores),
        seed,
        burn_in: settings.burn_in,
        chains: 1,
    })
}

/// Drives `model` for `settings.iterations` sweeps, calling `on_draw` after
/// every post-burn-in sweep.
pub(crate) fn run_chain<R: Rng + ?Sized>(
    model: &Model<'_>,
    settings: ChainSettings,
    fixed: Fixed,
    mut state: State,
    rng: &mut R,
    mut on_draw: impl FnMut(&State),
) -> Result<State> {
    for it in 0..settings.iterations {
        model
            .sweep(&mut state, fixed, rng)
            .map_err(|what| Error::Divergence { iteration: it + 1, what })?;
        if it >= settings.burn_in {
            on_draw(&state);
        }
    }
    Ok(state)
}

const PRIOR_BLOCK: usize = 1 << 14;

/// Independent prior draws of loadings and factor correlations. Zero cells
/// stay 0, polarity cells are drawn from the positive half of the prior.
pub fn sample_prior(spec: &UcfmSpec, prior: &PriorSpec, count: usize, seed: u64) -> Result<PriorDraws> {
    if count == 0 {
        return Err(Error::Precondition("prior draw count must be positive".into()));
    }
    prior.validate(spec.m())?;
    let (p, m) = (spec.p(), spec.m());
    let d = m * m.saturating_sub(1) / 2;
    let sd = prior.loading_variance.sqrt();
    let df = prior.phi_df_for(m);
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..count.div_ceil(PRIOR_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut rng: ChainRng = stream(seed, "prior", b as u64);
            let size = PRIOR_BLOCK.min(count - b * PRIOR_BLOCK);
            let mut lambda = Vec::with_capacity(size * p * m);
            let mut phi = Vec::with_capacity(size * d);
            for _ in 0..size {
                for k in 0..m {
                    for j in 0..p {
                        let cell = Cell::new(j, k);
                        let v = if spec.is_zero(cell) {
                            0.0
                        } else if spec.is_positive(cell) {
                            (sd * std_normal(&mut rng)).abs().max(f64::MIN_POSITIVE)
                        } else {
                            sd * std_normal(&mut rng)
                        };
                        lambda.push(v);
                    }
                }
                if m > 1 {
                    let r = correlation_from_inverse_wishart(df, m, &mut rng);
                    for k in 1..m {
                        for l in 0..k {
                            phi.push(r[(k, l)]);
                        }
                    }
                }
            }
            (lambda, phi)
        })
        .collect();
    let mut lambda = Vec::with_capacity(count * p * m);
    let mut phi_lower = Vec::with_capacity(count * d);
    for (l, f) in blocks {
        lambda.extend(l);
        phi_lower.extend(f);
    }
    Ok(PriorDraws { p, m, lambda, phi_lower, seed })
}

/// Draws a synthetic dataset of `n` rows from `params`, with an optional
/// extra error covariance between two variables.
pub fn simulate(
    params: &FactorParams,
    n: usize,
    extra_error_cov: Option<(usize, usize, f64)>,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let mut sigma = params.implied_covariance();
    if let Some((a, b, c)) = extra_error_cov {
        sigma[(a, b)] += c;
        sigma[(b, a)] += c;
    }
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Numerical("simulation covariance is not positive definite".into()))?;
    let mut rng = stream(seed, "simulate", 0);
    let p = params.p();
    let z = DMatrix::from_fn(p, n, |_, _| std_normal(&mut rng));
    let x = chol.l() * z;
    Ok(DMatrix::from_fn(n, p, |i, j| params.mu[j] + x[(j, i)]))
}

/// Parameters with all loadings zero and unit uniquenesses.
pub fn null_params(p: usize, m: usize) -> FactorParams {
    FactorParams {
        mu: DVector::zeros(p),
        lambda: DMatrix::zeros(p, m),
        psi: DVector::from_element(p, 1.0),
        phi: DMatrix::identity(m, m),
    }
}
