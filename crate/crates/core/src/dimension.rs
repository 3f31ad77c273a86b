//! Step 1: posterior probabilities for the number of common factors.
//!
//! Every candidate `m` gets a canonical identified model (anchor variables
//! picked greedily from squared multiple correlations), a Gibbs run, a rank
//! screen against overfactoring, and a training-sample marginal likelihood.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compare::{pmp_from_log, uniform_prior};
use crate::error::{Error, Result};
use crate::marginal::{chib_log_marginal_paired, training_splits, MarginalSettings};
use crate::preprocess::{correlation_matrix, factor_upper_bound};
use crate::rng::derive_seed;
use crate::sampler::{gibbs_run, PriorSpec};
use crate::stats::quantile;
use crate::types::{existence_slack, Dataset, PosteriorDraws, UcfmSpec};

/// Minimum number of retained draws for [`rank_screen`].
pub const SCREEN_MIN_DRAWS: usize = 1000;
/// Fail when q05(smallest singular value) < RATIO * q50(largest).
pub const SCREEN_RATIO: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "reason", rename_all = "snake_case")]
pub enum ScreenOutcome {
    Pass,
    Fail(String),
}

impl ScreenOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, ScreenOutcome::Pass)
    }
}

/// Rank-deficiency screen on the loading draws.
pub fn rank_screen(draws: &PosteriorDraws) -> Result<ScreenOutcome> {
    if draws.kept() < SCREEN_MIN_DRAWS {
        return Err(Error::Precondition(format!(
            "rank screen needs at least {SCREEN_MIN_DRAWS} draws, got {}",
            draws.kept()
        )));
    }
    if draws.spec.m() == 0 {
        return Ok(ScreenOutcome::Pass);
    }
    let (smallest, largest): (Vec<f64>, Vec<f64>) = draws
        .draws
        .iter()
        .map(|d| {
            let sv = d.lambda.clone().singular_values();
            (sv.min(), sv.max())
        })
        .unzip();
    let q05 = quantile(&smallest, 0.05);
    let q50 = quantile(&largest, 0.5);
    if q05 < SCREEN_RATIO * q50 {
        Ok(ScreenOutcome::Fail(format!(
            "rank-deficient loadings: 5% quantile of smallest singular value {q05:.4} < {SCREEN_RATIO} x median largest {q50:.4}"
        )))
    } else {
        Ok(ScreenOutcome::Pass)
    }
}

/// Squared multiple correlation of each variable with all others.
pub fn squared_multiple_correlations(corr: &DMatrix<f64>) -> Result<Vec<f64>> {
    let inv = corr
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Precondition("correlation matrix is singular".into()))?
        .inverse();
    Ok((0..corr.nrows()).map(|j| 1.0 - 1.0 / inv[(j, j)]).collect())
}

/// Greedy anchor choice: the highest SMC first, then each next variable
/// maximizing `SMC_j * (1 - max_a r_ja^2)` over the anchors chosen so far.
pub fn smc_anchors(corr: &DMatrix<f64>, m: usize) -> Result<Vec<usize>> {
    let p = corr.nrows();
    if m > p {
        return Err(Error::Spec(format!("cannot pick {m} anchors from {p} variables")));
    }
    let smc = squared_multiple_correlations(corr)?;
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for _ in 0..m {
        let best = (0..p)
            .filter(|j| !chosen.contains(j))
            .map(|j| {
                let overlap = chosen.iter().map(|&a| corr[(j, a)].powi(2)).fold(0.0, f64::max);
                (j, smc[j] * (1.0 - overlap))
            })
            .fold(None, |acc: Option<(usize, f64)>, (j, s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((j, s)),
            })
            .expect("candidates remain");
        chosen.push(best.0);
    }
    Ok(chosen)
}

/// Settings for [`select_dimension_with`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionSettings {
    /// Largest `m` tried; defaults to the existence bound.
    #[serde(default)]
    pub max_factors: Option<usize>,
    /// Explicit 0-based anchor rows per `m`, replacing the SMC heuristic.
    #[serde(default)]
    pub anchors: BTreeMap<usize, Vec<usize>>,
    #[serde(default)]
    pub marginal: MarginalSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEntry {
    pub m: usize,
    /// 0-based anchor rows of the canonical model.
    pub anchors: Vec<usize>,
    pub screen: ScreenOutcome,
    pub log_marginal: Option<f64>,
    pub pmp: f64,
}

/// Posterior probabilities over the candidate numbers of factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub candidate_ms: Vec<usize>,
    pub excluded: Vec<(usize, String)>,
    /// Aligned with `candidate_ms`; `None` for excluded models.
    pub log_marginals: Vec<Option<f64>>,
    /// Aligned with `candidate_ms`; 0 for excluded models.
    pub pmps: Vec<f64>,
    pub entries: Vec<DimensionEntry>,
}

impl DimensionReport {
    /// The candidate with the highest posterior probability.
    pub fn best(&self) -> usize {
        let i = (0..self.pmps.len())
            .max_by(|&a, &b| self.pmps[a].total_cmp(&self.pmps[b]))
            .expect("non-empty report");
        self.candidate_ms[i]
    }

    pub fn pmp_of(&self, m: usize) -> Option<f64> {
        self.candidate_ms.iter().position(|&c| c == m).map(|i| self.pmps[i])
    }

    pub fn is_excluded(&self, m: usize) -> bool {
        self.excluded.iter().any(|(e, _)| *e == m)
    }
}

/// [`select_dimension_with`] at default settings.
pub fn select_dimension(data: &Dataset, prior: &PriorSpec, seed: u64) -> Result<DimensionReport> {
    select_dimension_with(data, prior, &DimensionSettings::default(), seed)
}

pub fn select_dimension_with(
    data: &Dataset,
    prior: &PriorSpec,
    settings: &DimensionSettings,
    seed: u64,
) -> Result<DimensionReport> {
    let p = data.p();
    let bound = factor_upper_bound(p)
        .ok_or_else(|| Error::Precondition(format!("need at least 3 variables, got {p}")))?;
    let max_m = settings.max_factors.unwrap_or(bound);
    if max_m == 0 {
        return Err(Error::Spec("max_factors must be at least 1".into()));
    }
    if max_m > bound {
        return Err(Error::Spec(format!(
            "max_factors {max_m} violates the existence bound: (p-m)^2 - p - m = {} < 0 for p = {p}",
            existence_slack(p, max_m)
        )));
    }
    let corr = correlation_matrix(data);
    let candidates: Vec<usize> = (1..=max_m).collect();
    let mut specs = Vec::with_capacity(max_m);
    for &m in &candidates {
        let anchors = match settings.anchors.get(&m) {
            Some(a) => a.clone(),
            None => smc_anchors(&corr.values, m)?,
        };
        specs.push((m, UcfmSpec::anchored(p, &anchors)?, anchors));
    }
    // one set of training rows for all candidates, sized for the largest
    let largest = specs.iter().map(|(_, s, _)| s.free_parameter_count()).max().unwrap_or(0);
    let rows = prior.training_rows(data.n(), largest);
    let sets = training_splits(data.n(), rows, settings.marginal.splits, derive_seed(seed, "training", 0));
    let entries: Vec<DimensionEntry> = specs
        .into_par_iter()
        .map(|(m, spec, anchors)| evaluate_candidate(data, prior, settings, &sets, m, spec, anchors, seed))
        .collect::<Result<_>>()?;

    let included: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].log_marginal.is_some()).collect();
    if included.is_empty() {
        let reasons: Vec<String> = entries
            .iter()
            .map(|e| match &e.screen {
                ScreenOutcome::Fail(r) => format!("m={}: {r}", e.m),
                ScreenOutcome::Pass => format!("m={}: no marginal likelihood", e.m),
            })
            .collect();
        return Err(Error::Numerical(format!("all candidate models excluded ({})", reasons.join("; "))));
    }
    let logs: Vec<f64> = included.iter().map(|&i| entries[i].log_marginal.unwrap()).collect();
    let probs = pmp_from_log(&logs, &uniform_prior(logs.len()))?;
    let mut entries = entries;
    for (&i, pr) in included.iter().zip(probs) {
        entries[i].pmp = pr;
    }
    Ok(DimensionReport {
        candidate_ms: candidates,
        excluded: entries
            .iter()
            .filter_map(|e| match &e.screen {
                ScreenOutcome::Fail(r) => Some((e.m, r.clone())),
                ScreenOutcome::Pass => None,
            })
            .collect(),
        log_marginals: entries.iter().map(|e| e.log_marginal).collect(),
        pmps: entries.iter().map(|e| e.pmp).collect(),
        entries,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_candidate(
    data: &Dataset,
    prior: &PriorSpec,
    settings: &DimensionSettings,
    training_sets: &[Vec<usize>],
    m: usize,
    spec: UcfmSpec,
    anchors: Vec<usize>,
    seed: u64,
) -> Result<DimensionEntry> {
    let model_seed = derive_seed(seed, "dimension", m as u64);
    let draws = gibbs_run(data, &spec, prior, settings.marginal.chain, model_seed);
    let screen = match draws {
        Ok(d) => rank_screen(&d)?,
        Err(Error::Divergence { iteration, what }) => {
            ScreenOutcome::Fail(format!("sampler diverged at iteration {iteration}: {what}"))
        }
        Err(e) => return Err(e),
    };
    let log_marginal = if screen.passed() {
        match chib_log_marginal_paired(data, &spec, prior, settings.marginal.chain, training_sets, model_seed) {
            Ok(est) => Some(est.log_marginal),
            Err(Error::Numerical(msg)) | Err(Error::Divergence { what: msg, .. }) => {
                return Ok(DimensionEntry {
                    m,
                    anchors,
                    screen: ScreenOutcome::Fail(format!("marginal likelihood failed: {msg}")),
                    log_marginal: None,
                    pmp: 0.0,
                })
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(DimensionEntry { m, anchors, screen, log_marginal, pmp: 0.0 })
}
