//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod dsl_gen;

use bayes_cfa::rng::stream;
use bayes_cfa::sampler::{observed_loglik, PriorSpec};
use bayes_cfa::stats::{log_inverse_gamma_pdf, log_mean_exp, log_normal_pdf, LN_2PI};
use bayes_cfa::{Dataset, FactorParams, PosteriorDraws};
use nalgebra::{DMatrix, DVector};
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// Grid over `t = log psi` for one-dimensional quadrature.
fn log_psi_grid() -> impl Iterator<Item = f64> {
    const LO: f64 = -16.0;
    const HI: f64 = 8.0;
    const STEPS: usize = 48_000;
    (0..=STEPS).map(|i| LO + (HI - LO) * i as f64 / STEPS as f64)
}

const GRID_STEP: f64 = 24.0 / 48_000.0;

/// `log p(x_j | psi)` with the intercept integrated out.
fn column_log_lik_given_psi(x: &[f64], psi: f64, v: f64) -> f64 {
    let n = x.len() as f64;
    let s1: f64 = x.iter().sum();
    let s2: f64 = x.iter().map(|a| a * a).sum();
    let log_det = (n - 1.0) * psi.ln() + (psi + n * v).ln();
    let quad = (s2 - v * s1 * s1 / (psi + n * v)) / psi;
    -0.5 * (n * LN_2PI + log_det + quad)
}

fn column_log_joint(x: &[f64], t: f64, prior: &PriorSpec) -> f64 {
    let psi = t.exp();
    column_log_lik_given_psi(x, psi, prior.loading_variance)
        + log_inverse_gamma_pdf(psi, prior.psi_shape, prior.psi_rate)
        + t
}

fn column(x: &DMatrix<f64>, j: usize) -> Vec<f64> {
    x.column(j).iter().copied().collect()
}

/// Marginal likelihood of the no-factor model `x_ij ~ N(mu_j, psi_j)`,
/// integrating `mu_j` analytically and `log psi_j` by quadrature.
pub fn zero_factor_log_marginal(x: &DMatrix<f64>, prior: &PriorSpec) -> f64 {
    (0..x.ncols())
        .map(|j| {
            let col = column(x, j);
            let vals: Vec<f64> = log_psi_grid().map(|t| column_log_joint(&col, t, prior)).collect();
            log_mean_exp(&vals) + (vals.len() as f64 * GRID_STEP).ln()
        })
        .sum()
}

/// Posterior means and variances of `(mu_j, psi_j)` for the no-factor model.
pub struct ZeroFactorMoments {
    pub mu_mean: Vec<f64>,
    pub mu_var: Vec<f64>,
    pub psi_mean: Vec<f64>,
    pub psi_var: Vec<f64>,
}

pub fn zero_factor_moments(x: &DMatrix<f64>, prior: &PriorSpec) -> ZeroFactorMoments {
    let v = prior.loading_variance;
    let n = x.nrows() as f64;
    let mut out = ZeroFactorMoments { mu_mean: vec![], mu_var: vec![], psi_mean: vec![], psi_var: vec![] };
    for j in 0..x.ncols() {
        let col = column(x, j);
        let s1: f64 = col.iter().sum();
        let logs: Vec<f64> = log_psi_grid().map(|t| column_log_joint(&col, t, prior)).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut e_psi, mut e_psi2, mut e_mu, mut e_mu2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, l) in log_psi_grid().zip(&logs) {
            let w = (l - max).exp();
            let psi = t.exp();
            // mu | psi, x is normal
            let prec = n / psi + 1.0 / v;
            let m = s1 / psi / prec;
            z += w;
            e_psi += w * psi;
            e_psi2 += w * psi * psi;
            e_mu += w * m;
            e_mu2 += w * (m * m + 1.0 / prec);
        }
        let (ep, em) = (e_psi / z, e_mu / z);
        out.psi_mean.push(ep);
        out.psi_var.push(e_psi2 / z - ep * ep);
        out.mu_mean.push(em);
        out.mu_var.push(e_mu2 / z - em * em);
    }
    out
}

/// Importance-sampling marginal likelihood for a one-factor model whose
/// first loading is the positive anchor. The proposal is a multivariate t
/// fitted to posterior draws in the unconstrained coordinates
/// `(mu, log lambda_1, lambda_2.., log psi)`.
pub fn one_factor_is_log_marginal(data: &Dataset, draws: &PosteriorDraws, prior: &PriorSpec, count: usize, seed: u64) -> f64 {
    let p = data.p();
    let dim = 3 * p;
    let to_u = |d: &FactorParams| -> DVector<f64> {
        DVector::from_fn(dim, |i, _| match i {
            i if i < p => d.mu[i],
            i if i == p => d.lambda[(0, 0)].ln(),
            i if i < 2 * p => d.lambda[(i - p, 0)],
            i => d.psi[i - 2 * p].ln(),
        })
    };
    let us: Vec<DVector<f64>> = draws.draws.iter().map(to_u).collect();
    let g = us.len() as f64;
    let mean = us.iter().fold(DVector::zeros(dim), |a, u| a + u) / g;
    let mut cov = DMatrix::zeros(dim, dim);
    for u in &us {
        let d = u - &mean;
        cov += &d * d.transpose();
    }
    cov *= 1.5 / (g - 1.0);
    let chol = cov.clone().cholesky().expect("proposal covariance");
    let l = chol.l();
    let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let df = 6.0;
    let chi = ChiSquared::new(df).unwrap();
    let t_norm = statrs::function::gamma::ln_gamma((df + dim as f64) / 2.0)
        - statrs::function::gamma::ln_gamma(df / 2.0)
        - 0.5 * dim as f64 * (df * std::f64::consts::PI).ln()
        - 0.5 * log_det;
    let mut rng = stream(seed, "is", 0);
    let mut weights = Vec::with_capacity(count);
    for _ in 0..count {
        let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let w: f64 = chi.sample(&mut rng);
        let dev = &l * z * (df / w).sqrt();
        let u = &mean + &dev;
        let maha = chol.solve(&dev).dot(&dev);
        let log_q = t_norm - 0.5 * (df + dim as f64) * (1.0 + maha / df).ln();
        let params = FactorParams {
            mu: DVector::from_fn(p, |i, _| u[i]),
            lambda: DMatrix::from_fn(p, 1, |i, _| if i == 0 { u[p].exp() } else { u[p + i] }),
            psi: DVector::from_fn(p, |i, _| u[2 * p + i].exp()),
            phi: DMatrix::identity(1, 1),
        };
        let v = prior.loading_variance;
        let mut log_prior: f64 = params.mu.iter().map(|&m| log_normal_pdf(m, 0.0, v)).sum();
        log_prior += params.lambda.iter().map(|&m| log_normal_pdf(m, 0.0, v)).sum::<f64>() + std::f64::consts::LN_2;
        log_prior += params.psi.iter().map(|&s| log_inverse_gamma_pdf(s, prior.psi_shape, prior.psi_rate)).sum::<f64>();
        let log_jac = u[p] + (0..p).map(|i| u[2 * p + i]).sum::<f64>();
        let ll = observed_loglik(&params, data).unwrap_or(f64::NEG_INFINITY);
        weights.push(ll + log_prior + log_jac - log_q);
    }
    log_mean_exp(&weights)
}

/// Monte Carlo standard error of a chain mean by non-overlapping batch means.
pub fn batch_means_se(values: &[f64], batches: usize) -> f64 {
    let size = values.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Every free parameter of a draw, labelled, in a fixed order.
pub fn free_values(d: &FactorParams, spec: &bayes_cfa::UcfmSpec) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for k in 0..spec.m() {
        for j in 0..spec.p() {
            if !spec.is_zero(bayes_cfa::Cell::new(j, k)) {
                out.push((format!("L[{},{}]", j + 1, k + 1), d.lambda[(j, k)]));
            }
        }
    }
    for k in 0..spec.m() {
        for l in k + 1..spec.m() {
            out.push((format!("Phi[{},{}]", k + 1, l + 1), d.phi[(k, l)]));
        }
    }
    for j in 0..spec.p() {
        out.push((format!("psi[{}]", j + 1), d.psi[j]));
        out.push((format!("mu[{}]", j + 1), d.mu[j]));
    }
    out
}
