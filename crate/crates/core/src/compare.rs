//! Bayes factors of inequality-constrained models against the encompassing
//! unconstrained model, and posterior model probabilities.
//!
//! The Bayes factor of a constrained model against its encompassing model
//! is `f / c`, where `f` and `c` are the posterior and prior proportions of
//! loading draws that satisfy the constraints. Under the prior the loading
//! cells are independent, so `c` is estimated as a product over groups of
//! atoms that share no cells; this keeps tiny proportions (many interval
//! constraints) estimable from a moderate number of prior draws.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsl::{satisfies, Atom, ConstraintSet};
use crate::error::{Error, Result};
use crate::types::{Cell, ComparisonResult, PosteriorDraws, PriorDraws};

/// Minimum number of draws on either side.
pub const MIN_DRAWS: usize = 1000;

/// Encompassing-prior Bayes factor with its ingredients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncompassingBf {
    pub bf: f64,
    /// Posterior proportion satisfying the constraints.
    pub f: f64,
    /// Prior proportion satisfying the constraints.
    pub c: f64,
    /// Monte Carlo standard error of `bf` (binomial, delta method).
    pub mc_se: f64,
}

/// Groups atom indices into connected components of shared cells.
pub fn independent_groups(atoms: &[Atom]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..atoms.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut owner: BTreeMap<Cell, usize> = BTreeMap::new();
    for (i, atom) in atoms.iter().enumerate() {
        for (cell, _) in &atom.terms {
            match owner.get(cell) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
                None => {
                    owner.insert(*cell, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..atoms.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Prior proportion of one group of atoms.
fn group_proportion(prior: &PriorDraws, atoms: &[&Atom]) -> f64 {
    let (p, m) = (prior.p, prior.m);
    let size = p * m;
    let hits = prior
        .lambda
        .chunks_exact(size)
        .filter(|block| {
            atoms.iter().all(|a| {
                let v: f64 = a.terms.iter().map(|(c, w)| w * block[c.col * p + c.row]).sum::<f64>() + a.constant;
                v > 0.0
            })
        })
        .count();
    hits as f64 / prior.len() as f64
}

/// Encompassing-prior Bayes factor of `constraints` against the
/// unconstrained model whose draws are `posterior` and `prior`.
pub fn encompassing_bf(
    posterior: &PosteriorDraws,
    prior: &PriorDraws,
    constraints: &ConstraintSet,
    label: &str,
) -> Result<EncompassingBf> {
    if posterior.kept() < MIN_DRAWS || prior.len() < MIN_DRAWS {
        return Err(Error::Precondition(format!(
            "need at least {MIN_DRAWS} posterior and prior draws, got {} and {}",
            posterior.kept(),
            prior.len()
        )));
    }
    if (prior.p, prior.m) != (posterior.spec.p(), posterior.spec.m()) {
        return Err(Error::Precondition("prior and posterior draws have different dimensions".into()));
    }
    if constraints.atoms.is_empty() {
        return Ok(EncompassingBf { bf: 1.0, f: 1.0, c: 1.0, mc_se: 0.0 });
    }
    let g_post = posterior.kept() as f64;
    let g_prior = prior.len() as f64;
    let f = posterior.draws.iter().filter(|d| satisfies(&d.lambda, constraints)).count() as f64 / g_post;
    let mut c = 1.0;
    let mut rel_var = 0.0;
    for group in independent_groups(&constraints.atoms) {
        let atoms: Vec<&Atom> = group.iter().map(|&i| &constraints.atoms[i]).collect();
        let cg = group_proportion(prior, &atoms);
        if cg == 0.0 {
            return Err(Error::ZeroPriorProportion(label.to_string()));
        }
        c *= cg;
        rel_var += (1.0 - cg) / (cg * g_prior);
    }
    let bf = f / c;
    let mc_se = if f > 0.0 {
        bf * (rel_var + (1.0 - f) / (f * g_post)).sqrt()
    } else {
        // resolution of the posterior proportion
        1.0 / (g_post * c)
    };
    Ok(EncompassingBf { bf, f, c, mc_se })
}

fn check_prior_probs(prior_probs: &[f64], len: usize) -> Result<()> {
    if prior_probs.len() != len {
        return Err(Error::Precondition(format!(
            "{} prior probabilities for {len} models",
            prior_probs.len()
        )));
    }
    if prior_probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::Precondition("prior model probabilities must be non-negative".into()));
    }
    let total: f64 = prior_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("prior model probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// Uniform prior over `k` models.
pub fn uniform_prior(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Posterior model probabilities from Bayes factors against a common
/// reference model.
pub fn pmp(bfs: &[f64], prior_probs: &[f64]) -> Result<Vec<f64>> {
    if bfs.iter().any(|&b| !(b >= 0.0)) {
        return Err(Error::Precondition("Bayes factors must be non-negative".into()));
    }
    let logs: Vec<f64> = bfs.iter().map(|b| b.ln()).collect();
    pmp_from_log(&logs, prior_probs)
}

/// Posterior model probabilities from log marginal likelihoods (or log
/// Bayes factors against a common reference).
pub fn pmp_from_log(log_evidence: &[f64], prior_probs: &[f64]) -> Result<Vec<f64>> {
    check_prior_probs(prior_probs, log_evidence.len())?;
    if log_evidence.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Numerical("log evidence must be finite or -inf".into()));
    }
    let weighted: Vec<f64> = log_evidence
        .iter()
        .zip(prior_probs)
        .map(|(l, p)| if *p == 0.0 { f64::NEG_INFINITY } else { l + p.ln() })
        .collect();
    let max = weighted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Numerical("all Bayes factors are zero".into()));
    }
    let scaled: Vec<f64> = weighted.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = scaled.iter().sum();
    Ok(scaled.iter().map(|s| s / total).collect())
}

/// Matrix `B[s, t] = exp(l_s - l_t)` of pairwise Bayes factors.
pub fn bayes_factor_matrix(log_evidence: &[f64]) -> DMatrix<f64> {
    let k = log_evidence.len();
    DMatrix::from_fn(k, k, |s, t| if s == t { 1.0 } else { (log_evidence[s] - log_evidence[t]).exp() })
}

/// One compared model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBf {
    pub label: String,
    pub constraints: String,
    #[serde(flatten)]
    pub bf: EncompassingBf,
}

/// Outcome of [`compare_models`]: the summary plus per-model ingredients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub result: ComparisonResult,
    pub models: Vec<ModelBf>,
}

/// Bayes factors of each named constraint set against the encompassing
/// model, and posterior model probabilities over the constrained models.
pub fn compare_models(
    posterior: &PosteriorDraws,
    prior: &PriorDraws,
    models: &[(String, ConstraintSet)],
    prior_probs: Option<&[f64]>,
) -> Result<Comparison> {
    if models.is_empty() {
        return Err(Error::Precondition("no models to compare".into()));
    }
    let priors = match prior_probs {
        Some(p) => p.to_vec(),
        None => uniform_prior(models.len()),
    };
    check_prior_probs(&priors, models.len())?;
    let mut out = Vec::with_capacity(models.len());
    for (label, cs) in models {
        let bf = encompassing_bf(posterior, prior, cs, label)?;
        out.push(ModelBf { label: label.clone(), constraints: cs.source_text.clone(), bf });
    }
    let bfs: Vec<f64> = out.iter().map(|m| m.bf.bf).collect();
    let posterior_probs = pmp(&bfs, &priors)?;
    let result = ComparisonResult {
        labels: out.iter().map(|m| m.label.clone()).collect(),
        log_marginals_or_bfs: bfs,
        prior_probs: priors,
        posterior_probs,
    };
    Ok(Comparison { result, models: out })
}
