//! Log marginal likelihoods by the candidate identity
//! `log m(X) = log L(θ*; X) + log π(θ*) − log π(θ* | X)`.
//!
//! The posterior ordinate is split along the Gibbs blocks,
//! `π(Φ*|X) π(Λ*|Φ*,X) π(μ*|Φ*,Λ*,X) π(Ψ*|Φ*,Λ*,μ*,X)`. The factor
//! correlations are updated by Metropolis steps, so their ordinate uses the
//! acceptance-probability identity; the other blocks average their full
//! conditionals over reduced runs with the earlier blocks held at θ*.
//!
//! With diffuse priors the identity is evaluated on training-sample splits:
//! the posterior on a random subset of rows acts as the prior for the rest,
//! so the split value is `log m(X_rest | X_train) = log m(X) − log m(X_train)`.
//! Both terms are candidate estimates under the diffuse prior, each anchored
//! at a high-density point of its own posterior (see [`high_density_anchor`]).

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, ChainRng};
use crate::sampler::{observed_loglik_matrix, run_chain, ChainSettings, Fixed, Model, PriorSpec, State};
use crate::stats::{log_correlation_prior, log_inverse_gamma_pdf, log_mean_exp, log_normal_pdf};
use crate::types::{ensure_valid, Cell, Dataset, FactorParams, PosteriorDraws, UcfmSpec};

/// Chain lengths and number of training splits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalSettings {
    /// Main and reduced runs all use this length.
    #[serde(default = "default_chain")]
    pub chain: ChainSettings,
    #[serde(default = "default_splits")]
    pub splits: usize,
}

fn default_chain() -> ChainSettings {
    ChainSettings::new(10_000, 2_500)
}

fn default_splits() -> usize {
    5
}

impl Default for MarginalSettings {
    fn default() -> Self {
        MarginalSettings { chain: default_chain(), splits: default_splits() }
    }
}

/// Result of [`chib_log_marginal_with`].
#[derive(Clone, Debug)]
pub struct MarginalEstimate {
    /// Average over splits.
    pub log_marginal: f64,
    pub split_values: Vec<f64>,
    pub anchor: FactorParams,
    /// Retained draws of the full-data main run.
    pub draws: PosteriorDraws,
}

/// Posterior ordinate pieces on the log scale.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Ordinate {
    pub phi: f64,
    pub lambda: f64,
    pub mu: f64,
    pub psi: f64,
}

impl Ordinate {
    pub fn total(&self) -> f64 {
        self.phi + self.lambda + self.mu + self.psi
    }
}

/// Posterior mean with polarity cells kept strictly positive.
pub fn anchor_point(draws: &PosteriorDraws) -> FactorParams {
    let mut anchor = draws.mean();
    for c in draws.spec.positive_cells() {
        let v = &mut anchor.lambda[(c.row, c.col)];
        *v = v.max(f64::MIN_POSITIVE);
    }
    anchor
}

/// Unnormalized log posterior `log L(θ; X) + log π(θ)`.
pub fn log_kernel(params: &FactorParams, x: &DMatrix<f64>, spec: &UcfmSpec, prior: &PriorSpec) -> f64 {
    let lp = log_prior_density(params, spec, prior);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    observed_loglik_matrix(params, x).map_or(f64::NEG_INFINITY, |ll| ll + lp)
}

/// The posterior mean, or the retained draw with the highest posterior
/// kernel when the mean sits in a low-density region (curved ridges).
pub fn high_density_anchor(draws: &PosteriorDraws, x: &DMatrix<f64>, prior: &PriorSpec) -> FactorParams {
    let mean = anchor_point(draws);
    let spec = &draws.spec;
    let best = draws
        .draws
        .par_iter()
        .map(|d| (log_kernel(d, x, spec, prior), d))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((k, d)) if k > log_kernel(&mean, x, spec, prior) => d.clone(),
        _ => mean,
    }
}

/// Log density of the diffuse prior at `params`; polarity cells use the
/// half-normal.
pub fn log_prior_density(params: &FactorParams, spec: &UcfmSpec, prior: &PriorSpec) -> f64 {
    let v = prior.loading_variance;
    let mut out: f64 = params.mu.iter().map(|&m| log_normal_pdf(m, 0.0, v)).sum();
    for k in 0..spec.m() {
        for j in 0..spec.p() {
            let cell = Cell::new(j, k);
            if spec.is_zero(cell) {
                continue;
            }
            let l = params.lambda[(j, k)];
            if spec.is_positive(cell) {
                if l <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                out += std::f64::consts::LN_2;
            }
            out += log_normal_pdf(l, 0.0, v);
        }
    }
    out += params.psi.iter().map(|&s| log_inverse_gamma_pdf(s, prior.psi_shape, prior.psi_rate)).sum::<f64>();
    if spec.m() > 1 {
        out += log_correlation_prior(&params.phi, prior.phi_df_for(spec.m()));
    }
    out
}

struct MainRun {
    draws: Vec<FactorParams>,
    /// `(Phi, Xi^T Xi)` after each retained sweep.
    phi_states: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    last: State,
}

fn main_run(model: &Model<'_>, settings: ChainSettings, rng: &mut ChainRng) -> Result<MainRun> {
    let mut draws = Vec::with_capacity(settings.kept());
    let mut phi_states = Vec::new();
    let track_phi = model.m > 1;
    let last = run_chain(model, settings, Fixed::default(), model.initial_state(), rng, |s| {
        draws.push(s.params.clone());
        if track_phi {
            phi_states.push((s.params.phi.clone(), s.xi.transpose() * &s.xi));
        }
    })?;
    Ok(MainRun { draws, phi_states, last })
}

fn ordinate(
    model: &Model<'_>,
    settings: ChainSettings,
    anchor: &FactorParams,
    main: &MainRun,
    rng: &mut ChainRng,
) -> Result<Ordinate> {
    let mut out = Ordinate::default();
    let mut state = main.last.clone();

    // Phi free, everything else integrated: acceptance identity.
    let mut phi_num = Vec::new();
    if model.m > 1 {
        phi_num = main
            .phi_states
            .iter()
            .map(|(phi, xtx)| {
                model.phi_acceptance(phi, &anchor.phi, xtx).ln() + model.phi_proposal_log_density(&anchor.phi, xtx)
            })
            .collect();
    }

    // Reduced run 1: Phi fixed.
    state.params.phi = anchor.phi.clone();
    let mut lambda_terms = Vec::with_capacity(settings.kept());
    let mut phi_den = Vec::new();
    let mut proposal_rng = stream(rng.random(), "phi-proposal", 0);
    let fixed = Fixed { phi: true, ..Fixed::default() };
    state = run_chain(model, settings, fixed, state, rng, |s| {
        lambda_terms.push(model.log_lambda_conditional(s, &anchor.lambda));
        if model.m > 1 {
            let xtx = s.xi.transpose() * &s.xi;
            let to = model.phi_propose(&xtx, &mut proposal_rng);
            phi_den.push(model.phi_acceptance(&anchor.phi, &to, &xtx).ln());
        }
    })?;
    if model.m > 1 {
        out.phi = log_mean_exp(&phi_num) - log_mean_exp(&phi_den);
    }
    if model.m > 0 {
        out.lambda = log_mean_exp(&lambda_terms);
    }

    // Reduced run 2: Phi, Lambda fixed.
    state.params.lambda = anchor.lambda.clone();
    let mut mu_terms = Vec::with_capacity(settings.kept());
    let fixed = Fixed { phi: true, lambda: true, mu: false };
    state = run_chain(model, settings, fixed, state, rng, |s| {
        mu_terms.push(model.log_mu_conditional(s, &anchor.mu));
    })?;
    out.mu = log_mean_exp(&mu_terms);

    // Reduced run 3: Phi, Lambda, mu fixed.
    state.params.mu = anchor.mu.clone();
    let mut psi_terms = Vec::with_capacity(settings.kept());
    let fixed = Fixed { phi: true, lambda: true, mu: true };
    run_chain(model, settings, fixed, state, rng, |s| {
        psi_terms.push(model.log_psi_conditional(s, &anchor.psi));
    })?;
    out.psi = log_mean_exp(&psi_terms);

    if !out.total().is_finite() {
        return Err(Error::Numerical(format!(
            "posterior ordinate at the anchor is numerically zero or undefined \
             (log pieces: phi {}, lambda {}, mu {}, psi {}); choose a different anchor",
            out.phi, out.lambda, out.mu, out.psi
        )));
    }
    Ok(out)
}

/// Log posterior ordinate at `anchor` for data `x`, from a fresh main run.
pub fn log_posterior_ordinate(
    x: &DMatrix<f64>,
    spec: &UcfmSpec,
    prior: &PriorSpec,
    anchor: &FactorParams,
    settings: ChainSettings,
    seed: u64,
) -> Result<Ordinate> {
    let model = Model::new(x, spec, prior);
    let mut rng = stream(seed, "chain", 0);
    let main = main_run(&model, settings, &mut rng)?;
    ordinate(&model, settings, anchor, &main, &mut rng)
}

fn check_inputs(data: &Dataset, spec: &UcfmSpec, prior: &PriorSpec, settings: &MarginalSettings) -> Result<()> {
    ensure_valid(spec, data)?;
    prior.validate(spec.m())?;
    settings.chain.validate()?;
    if settings.splits == 0 {
        return Err(Error::Spec("at least one training split is required".into()));
    }
    Ok(())
}

struct FullFit {
    anchor: FactorParams,
    log_marginal: f64,
    draws: PosteriorDraws,
}

fn full_fit(x: &DMatrix<f64>, spec: &UcfmSpec, prior: &PriorSpec, chain: ChainSettings, seed: u64) -> Result<FullFit> {
    let model = Model::new(x, spec, prior);
    let mut rng = stream(seed, "chain", 0);
    let main = main_run(&model, chain, &mut rng)?;
    let draws = PosteriorDraws {
        spec: spec.clone(),
        draws: main.draws.clone(),
        factor_scores: None,
        seed,
        burn_in: chain.burn_in,
        chains: 1,
    };
    let anchor = high_density_anchor(&draws, x, prior);
    let ordinate = ordinate(&model, chain, &anchor, &main, &mut rng)?;
    let log_marginal = log_kernel(&anchor, x, spec, prior) - ordinate.total();
    Ok(FullFit { anchor, log_marginal, draws })
}

/// Candidate-identity estimate under the diffuse prior itself, without
/// training samples.
pub fn chib_log_marginal_untrained(
    data: &Dataset,
    spec: &UcfmSpec,
    prior: &PriorSpec,
    chain: ChainSettings,
    seed: u64,
) -> Result<f64> {
    check_inputs(data, spec, prior, &MarginalSettings { chain, splits: 1 })?;
    Ok(full_fit(data.values(), spec, prior, chain, seed)?.log_marginal)
}

/// `log m(X_rest | X_train)` for an explicit set of training rows.
pub fn chib_log_marginal_split(
    data: &Dataset,
    spec: &UcfmSpec,
    prior: &PriorSpec,
    chain: ChainSettings,
    training: &[usize],
    seed: u64,
) -> Result<f64> {
    check_inputs(data, spec, prior, &MarginalSettings { chain, splits: 1 })?;
    let fit = full_fit(data.values(), spec, prior, chain, seed)?;
    split_value(data, spec, prior, chain, &fit, training, seed)
}

fn split_value(
    data: &Dataset,
    spec: &UcfmSpec,
    prior: &PriorSpec,
    chain: ChainSettings,
    fit: &FullFit,
    training: &[usize],
    seed: u64,
) -> Result<f64> {
    let n = data.n();
    let mut rows: Vec<usize> = training.to_vec();
    rows.sort_unstable();
    rows.dedup();
    if rows.iter().any(|&i| i >= n) {
        return Err(Error::Precondition(format!("training row out of range for {n} rows")));
    }
    if rows.is_empty() || rows.len() == n {
        return Err(Error::Precondition("training sample must be a proper, non-empty subset".into()));
    }
    let train = data.select_rows(&rows);
    let train_fit = full_fit(train.values(), spec, prior, chain, seed)?;
    Ok(fit.log_marginal - train_fit.log_marginal)
}

/// `count` random training sets of `rows` rows each out of `n`.
pub fn training_splits(n: usize, rows: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..count)
        .map(|s| {
            let mut rng = stream(seed, "split", s as u64);
            let mut set = sample(&mut rng, n, rows.min(n)).into_vec();
            set.sort_unstable();
            set
        })
        .collect()
}

/// Training-sample estimate averaged over the given training sets. Models
/// compared with each other must share the same sets.
pub fn chib_log_marginal_paired(
    data: &Dataset,
    spec: &UcfmSpec,
    prior: &PriorSpec,
    chain: ChainSettings,
    training_sets: &[Vec<usize>],
    seed: u64,
) -> Result<MarginalEstimate> {
    check_inputs(data, spec, prior, &MarginalSettings { chain, splits: training_sets.len() })?;
    let fit = full_fit(data.values(), spec, prior, chain, seed)?;
    let split_values: Vec<f64> = training_sets
        .par_iter()
        .enumerate()
        .map(|(s, rows)| split_value(data, spec, prior, chain, &fit, rows, derive_seed(seed, "split-run", s as u64)))
        .collect::<Result<_>>()?;
    let log_marginal = split_values.iter().sum::<f64>() / split_values.len() as f64;
    Ok(MarginalEstimate { log_marginal, split_values, anchor: fit.anchor, draws: fit.draws })
}

/// Training-sample candidate estimate, averaged over random splits whose
/// size follows [`PriorSpec::training_rows`] for this model.
pub fn chib_log_marginal_with(
    data: &Dataset,
    spec: &UcfmSpec,
    prior: &PriorSpec,
    settings: MarginalSettings,
    seed: u64,
) -> Result<MarginalEstimate> {
    check_inputs(data, spec, prior, &settings)?;
    let rows = prior.training_rows(data.n(), spec.free_parameter_count());
    let sets = training_splits(data.n(), rows, settings.splits, seed);
    chib_log_marginal_paired(data, spec, prior, settings.chain, &sets, seed)
}

/// [`chib_log_marginal_with`] at default chain lengths and five splits.
pub fn chib_log_marginal(data: &Dataset, spec: &UcfmSpec, prior: &PriorSpec, seed: u64) -> Result<f64> {
    Ok(chib_log_marginal_with(data, spec, prior, MarginalSettings::default(), seed)?.log_marginal)
}
