//! Gibbs sweep for the oblique Gaussian factor model
//! `x_i = mu + Lambda xi_i + e_i`, `xi_i ~ N(0, Phi)`, `e_i ~ N(0, Psi)`.
//!
//! Blocks, in sweep order:
//! 1. factor scores, row-wise normal;
//! 2. intercepts, normal;
//! 3. loading rows, normal over free cells (anchor rows: normal truncated at 0);
//! 4. uniquenesses, inverse gamma;
//! 5. factor correlations, independence Metropolis-Hastings: the proposal
//!    is normal around the sample correlations of the current scores, the
//!    target uses the correlation prior induced by `IW(df, I)`.
//!
//! The conditional log densities used by the marginal-likelihood estimator
//! live here too so that they stay in lockstep with the samplers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::sampler::PriorSpec;
use crate::stats::{
    chol_log_det, inverse_gamma, log_correlation_prior, log_inverse_gamma_pdf, log_normal_pdf,
    log_normal_positive_pdf, normal_positive, std_normal, LN_2PI,
};
use crate::types::{Cell, FactorParams, UcfmSpec};

const PHI_PROPOSAL_INFLATION: f64 = 1.5;

#[derive(Clone, Debug)]
pub(crate) enum RowKind {
    /// Unrestricted free columns (possibly empty).
    Free(Vec<usize>),
    /// Anchor row: one free column constrained positive.
    Positive(usize),
}

/// Blocks held fixed during a reduced run.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Fixed {
    pub phi: bool,
    pub lambda: bool,
    pub mu: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct State {
    pub params: FactorParams,
    pub xi: DMatrix<f64>,
}

pub(crate) struct Model<'a> {
    pub x: &'a DMatrix<f64>,
    pub prior: PriorSpec,
    pub phi_df: f64,
    pub rows: Vec<RowKind>,
    pub m: usize,
}

impl<'a> Model<'a> {
    pub fn new(x: &'a DMatrix<f64>, spec: &UcfmSpec, prior: &PriorSpec) -> Self {
        let m = spec.m();
        let rows = (0..spec.p())
            .map(|j| {
                let free = spec.free_in_row(j);
                match free.as_slice() {
                    [k] if spec.is_positive(Cell::new(j, *k)) => RowKind::Positive(*k),
                    _ => RowKind::Free(free),
                }
            })
            .collect();
        Model {
            x,
            prior: prior.clone(),
            phi_df: prior.phi_df_for(m),
            rows,
            m,
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn initial_state(&self) -> State {
        let (n, p, m) = (self.n(), self.p(), self.m);
        let mut mu = DVector::zeros(p);
        let mut psi = DVector::zeros(p);
        for j in 0..p {
            let col = self.x.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
            mu[j] = mean;
            psi[j] = 0.5 * var.max(1e-6);
        }
        let mut lambda = DMatrix::zeros(p, m);
        for (j, row) in self.rows.iter().enumerate() {
            if let RowKind::Positive(k) = row {
                lambda[(j, *k)] = psi[j].sqrt();
            }
        }
        State {
            params: FactorParams { mu, lambda, psi, phi: DMatrix::identity(m, m) },
            xi: DMatrix::zeros(n, m),
        }
    }

    fn centered(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        let mut y = self.x.clone();
        for j in 0..self.p() {
            let mj = mu[j];
            for v in y.column_mut(j).iter_mut() {
                *v -= mj;
            }
        }
        y
    }

    /// One full sweep; returns a description of the first non-finite block.
    pub fn sweep<R: Rng + ?Sized>(&self, s: &mut State, fixed: Fixed, rng: &mut R) -> Result<(), String> {
        if self.m > 0 {
            self.update_scores(s, rng)?;
        }
        if !fixed.mu {
            self.update_mu(s, rng);
        }
        if !fixed.lambda && self.m > 0 {
            self.update_lambda(s, rng)?;
        }
        self.update_psi(s, rng);
        if !fixed.phi && self.m > 1 {
            self.update_phi(s, rng);
        }
        let p = &s.params;
        if p.mu.iter().chain(p.lambda.iter()).chain(s.xi.iter()).any(|v| !v.is_finite()) {
            return Err("non-finite intercept, loading or factor score".into());
        }
        if p.psi.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err("uniqueness left the positive reals".into());
        }
        Ok(())
    }

    fn update_scores<R: Rng + ?Sized>(&self, s: &mut State, rng: &mut R) -> Result<(), String> {
        let (n, m) = (self.n(), self.m);
        let p = &s.params;
        let phi_inv = p.phi.clone().cholesky().ok_or("factor correlation not positive definite")?.inverse();
        let scaled = DMatrix::from_fn(self.p(), m, |j, k| p.lambda[(j, k)] / p.psi[j]);
        let prec = phi_inv + p.lambda.transpose() * &scaled;
        let chol = prec.cholesky().ok_or("score precision not positive definite")?;
        let cov = chol.inverse();
        let l_inv = chol.l().try_inverse().ok_or("singular score factor")?;
        let mean = self.centered(&p.mu) * scaled * cov;
        let z = DMatrix::from_fn(n, m, |_, _| std_normal(rng));
        s.xi = mean + z * l_inv;
        Ok(())
    }

    fn update_mu<R: Rng + ?Sized>(&self, s: &mut State, rng: &mut R) {
        let n = self.n() as f64;
        let fitted = &s.xi * s.params.lambda.transpose();
        for j in 0..self.p() {
            let (mean, var) = self.mu_moments(j, &s.params.psi, &fitted, n);
            s.params.mu[j] = mean + var.sqrt() * std_normal(rng);
        }
    }

    fn mu_moments(&self, j: usize, psi: &DVector<f64>, fitted: &DMatrix<f64>, n: f64) -> (f64, f64) {
        let resid_sum: f64 = if fitted.ncols() == 0 {
            self.x.column(j).sum()
        } else {
            self.x.column(j).iter().zip(fitted.column(j).iter()).map(|(a, b)| a - b).sum()
        };
        let prec = n / psi[j] + 1.0 / self.prior.loading_variance;
        (resid_sum / psi[j] / prec, 1.0 / prec)
    }

    /// Cross products `Xi^T Xi` and `Xi^T (X - 1 mu^T)`.
    fn cross(&self, s: &State) -> (DMatrix<f64>, DMatrix<f64>) {
        let xtx = s.xi.transpose() * &s.xi;
        let xty = s.xi.transpose() * self.centered(&s.params.mu);
        (xtx, xty)
    }

    /// Mean and precision of the free loadings of row `j`.
    fn row_moments(&self, cols: &[usize], j: usize, psi: f64, xtx: &DMatrix<f64>, xty: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let f = cols.len();
        let v = self.prior.loading_variance;
        let prec = DMatrix::from_fn(f, f, |a, b| {
            xtx[(cols[a], cols[b])] / psi + if a == b { 1.0 / v } else { 0.0 }
        });
        let rhs = DVector::from_fn(f, |a, _| xty[(cols[a], j)] / psi);
        let mean = prec.clone().cholesky().expect("loading precision is positive definite").solve(&rhs);
        (mean, prec)
    }

    fn update_lambda<R: Rng + ?Sized>(&self, s: &mut State, rng: &mut R) -> Result<(), String> {
        let (xtx, xty) = self.cross(s);
        for (j, row) in self.rows.iter().enumerate() {
            let psi = s.params.psi[j];
            match row {
                RowKind::Free(cols) if cols.is_empty() => {}
                RowKind::Free(cols) => {
                    let (mean, prec) = self.row_moments(cols, j, psi, &xtx, &xty);
                    let chol = prec.cholesky().ok_or("loading precision not positive definite")?;
                    let z = DVector::from_fn(cols.len(), |_, _| std_normal(rng));
                    let noise = chol.l().transpose().solve_upper_triangular(&z).ok_or("singular loading factor")?;
                    for (a, &k) in cols.iter().enumerate() {
                        s.params.lambda[(j, k)] = mean[a] + noise[a];
                    }
                }
                RowKind::Positive(k) => {
                    let (mean, prec) = self.row_moments(&[*k], j, psi, &xtx, &xty);
                    s.params.lambda[(j, *k)] = normal_positive(mean[0], 1.0 / prec[(0, 0)], rng);
                }
            }
        }
        Ok(())
    }

    fn residual_ss(&self, params: &FactorParams, xi: &DMatrix<f64>) -> DVector<f64> {
        let mut resid = self.centered(&params.mu);
        if self.m > 0 {
            resid -= xi * params.lambda.transpose();
        }
        DVector::from_fn(self.p(), |j, _| resid.column(j).norm_squared())
    }

    fn psi_posterior(&self, ss: f64) -> (f64, f64) {
        (self.prior.psi_shape + 0.5 * self.n() as f64, self.prior.psi_rate + 0.5 * ss)
    }

    fn update_psi<R: Rng + ?Sized>(&self, s: &mut State, rng: &mut R) {
        let ss = self.residual_ss(&s.params, &s.xi);
        for j in 0..self.p() {
            let (shape, rate) = self.psi_posterior(ss[j]);
            s.params.psi[j] = inverse_gamma(shape, rate, rng);
        }
    }

    /// Log of the factor-correlation full conditional, unnormalized, given
    /// the score cross-product `xtx`.
    pub fn phi_log_target(&self, phi: &DMatrix<f64>, xtx: &DMatrix<f64>) -> f64 {
        let Some(chol) = phi.clone().cholesky() else {
            return f64::NEG_INFINITY;
        };
        let log_det = chol_log_det(&chol.l());
        let trace = (chol.inverse() * xtx).trace();
        log_correlation_prior(phi, self.phi_df) - 0.5 * self.n() as f64 * log_det - 0.5 * trace
    }

    /// Mean and standard deviation of the independence proposal for each
    /// factor correlation, built from the sample correlation of the scores.
    fn phi_proposal_moments(&self, xtx: &DMatrix<f64>) -> Vec<(f64, f64)> {
        let n = self.n() as f64;
        let mut out = Vec::with_capacity(self.m * (self.m - 1) / 2);
        for k in 1..self.m {
            for l in 0..k {
                let r = (xtx[(k, l)] / (xtx[(k, k)] * xtx[(l, l)]).sqrt()).clamp(-0.999, 0.999);
                let sd = PHI_PROPOSAL_INFLATION * (1.0 - r * r).max(0.01) / n.sqrt();
                out.push((r, sd));
            }
        }
        out
    }

    /// Draws a candidate correlation matrix given the score cross-product.
    pub fn phi_propose<R: Rng + ?Sized>(&self, xtx: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
        let mut to = DMatrix::identity(self.m, self.m);
        let moments = self.phi_proposal_moments(xtx);
        let mut idx = 0;
        for k in 1..self.m {
            for l in 0..k {
                let (mean, sd) = moments[idx];
                let v = mean + sd * std_normal(rng);
                to[(k, l)] = v;
                to[(l, k)] = v;
                idx += 1;
            }
        }
        to
    }

    pub fn phi_proposal_log_density(&self, to: &DMatrix<f64>, xtx: &DMatrix<f64>) -> f64 {
        let moments = self.phi_proposal_moments(xtx);
        let mut out = 0.0;
        let mut idx = 0;
        for k in 1..self.m {
            for l in 0..k {
                let (mean, sd) = moments[idx];
                out += log_normal_pdf(to[(k, l)], mean, sd * sd);
                idx += 1;
            }
        }
        out
    }

    /// Metropolis-Hastings acceptance probability for `from -> to` under
    /// score cross-product `xtx`.
    pub fn phi_acceptance(&self, from: &DMatrix<f64>, to: &DMatrix<f64>, xtx: &DMatrix<f64>) -> f64 {
        let target_to = self.phi_log_target(to, xtx);
        if target_to == f64::NEG_INFINITY {
            return 0.0;
        }
        let log_ratio = target_to - self.phi_log_target(from, xtx) + self.phi_proposal_log_density(from, xtx)
            - self.phi_proposal_log_density(to, xtx);
        log_ratio.exp().min(1.0)
    }

    fn update_phi<R: Rng + ?Sized>(&self, s: &mut State, rng: &mut R) {
        let xtx = s.xi.transpose() * &s.xi;
        let proposal = self.phi_propose(&xtx, rng);
        let alpha = self.phi_acceptance(&s.params.phi, &proposal, &xtx);
        if rng.random::<f64>() < alpha {
            s.params.phi = proposal;
        }
    }

    /// `log p(Lambda* | mu, Psi, Xi)` at the current state's other blocks.
    pub fn log_lambda_conditional(&self, s: &State, lambda: &DMatrix<f64>) -> f64 {
        let (xtx, xty) = self.cross(s);
        let mut out = 0.0;
        for (j, row) in self.rows.iter().enumerate() {
            let psi = s.params.psi[j];
            match row {
                RowKind::Free(cols) if cols.is_empty() => {}
                RowKind::Free(cols) => {
                    let (mean, prec) = self.row_moments(cols, j, psi, &xtx, &xty);
                    let chol = prec.cholesky().expect("positive definite precision");
                    let d = DVector::from_fn(cols.len(), |a, _| lambda[(j, cols[a])] - mean[a]);
                    let quad = (chol.l().transpose() * d).norm_squared();
                    out += -0.5 * (cols.len() as f64 * LN_2PI - chol_log_det(&chol.l()) + quad);
                }
                RowKind::Positive(k) => {
                    let (mean, prec) = self.row_moments(&[*k], j, psi, &xtx, &xty);
                    out += log_normal_positive_pdf(lambda[(j, *k)], mean[0], 1.0 / prec[(0, 0)]);
                }
            }
        }
        out
    }

    /// `log p(mu* | Lambda, Psi, Xi)`.
    pub fn log_mu_conditional(&self, s: &State, mu: &DVector<f64>) -> f64 {
        let n = self.n() as f64;
        let fitted = &s.xi * s.params.lambda.transpose();
        (0..self.p())
            .map(|j| {
                let (mean, var) = self.mu_moments(j, &s.params.psi, &fitted, n);
                log_normal_pdf(mu[j], mean, var)
            })
            .sum()
    }

    /// `log p(Psi* | mu, Lambda, Xi)`.
    pub fn log_psi_conditional(&self, s: &State, psi: &DVector<f64>) -> f64 {
        let ss = self.residual_ss(&s.params, &s.xi);
        (0..self.p())
            .map(|j| {
                let (shape, rate) = self.psi_posterior(ss[j]);
                log_inverse_gamma_pdf(psi[j], shape, rate)
            })
            .sum()
    }
}
