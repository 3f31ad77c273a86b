//! Densities, special functions and samplers used by the Gibbs sampler and
//! the marginal-likelihood estimator.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
pub use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// `log Phi(z)` for the standard normal CDF, accurate far into the lower tail.
pub fn log_ndtr(z: f64) -> f64 {
    if z > -35.0 {
        (0.5 * erfc(-z / SQRT_2)).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - 0.5 * LN_2PI - (-z).ln() + series.ln()
    }
}

/// Draws `Z ~ N(0,1)` conditioned on `Z > a` by inverse CDF; switches to
/// exponential rejection once the tail mass is too small to invert.
pub fn std_normal_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if a <= 0.0 {
        let lower = 0.5 * erfc(-a / SQRT_2);
        let q = lower + u * (1.0 - lower);
        let z = -SQRT_2 * erfc_inv(2.0 * q);
        z.max(a)
    } else if a < 8.0 {
        let tail = 0.5 * erfc(a / SQRT_2);
        // u in [0,1); use 1-u so the quantile stays strictly inside the tail
        let z = SQRT_2 * erfc_inv(2.0 * (1.0 - u) * tail);
        if z > a {
            z
        } else {
            a.next_up()
        }
    } else {
        let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = rng.random::<f64>();
            let z = a - (1.0 - e).ln() / alpha;
            let accept: f64 = rng.random();
            if accept <= (-0.5 * (z - alpha) * (z - alpha)).exp() {
                return z;
            }
        }
    }
}

/// Draws from `N(mean, var)` truncated to `(0, inf)`.
pub fn normal_positive<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    let sd = var.sqrt();
    let x = mean + sd * std_normal_above(-mean / sd, rng);
    if x > 0.0 {
        x
    } else {
        f64::MIN_POSITIVE
    }
}

/// Log density of `N(mean, var)` truncated to `(0, inf)` at `x > 0`.
pub fn log_normal_positive_pdf(x: f64, mean: f64, var: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    log_normal_pdf(x, mean, var) - log_ndtr(mean / var.sqrt())
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws `1/X` with `X ~ Gamma(shape, rate)`.
pub fn inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters");
    1.0 / g.sample(rng)
}

pub fn log_inverse_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

pub fn chi_squared<R: Rng + ?Sized>(df: f64, rng: &mut R) -> f64 {
    Gamma::new(0.5 * df, 2.0).expect("valid chi-squared df").sample(rng)
}

/// Multivariate log-gamma `ln Gamma_m(a)`.
pub fn ln_mv_gamma(m: usize, a: f64) -> f64 {
    let mf = m as f64;
    mf * (mf - 1.0) / 4.0 * PI.ln() + (1..=m).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Correlation matrix of a draw from the inverse Wishart `IW(df, I_m)`.
pub fn correlation_from_inverse_wishart<R: Rng + ?Sized>(df: f64, m: usize, rng: &mut R) -> DMatrix<f64> {
    // Bartlett factor A of W ~ Wishart(df, I); Sigma = W^{-1}
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = chi_squared(df - i as f64, rng).sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    let w = &a * a.transpose();
    let sigma = w.cholesky().expect("Wishart draw is positive definite").inverse();
    to_correlation(&sigma)
}

/// Rescales a covariance matrix to unit diagonal.
pub fn to_correlation(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let m = sigma.nrows();
    let sd: Vec<f64> = (0..m).map(|i| sigma[(i, i)].sqrt()).collect();
    DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { sigma[(i, j)] / (sd[i] * sd[j]) })
}

/// Log density of the correlation matrix implied by `Sigma ~ IW(df, I_m)`:
///
/// `p(R) = Gamma(df/2)^m / Gamma_m(df/2) * |R|^{-(df+m+1)/2} * prod_i (R^{-1})_{ii}^{-df/2}`.
///
/// Returns `-inf` when `r` is not positive definite.
pub fn log_correlation_prior(r: &DMatrix<f64>, df: f64) -> f64 {
    let m = r.nrows();
    if m <= 1 {
        return 0.0;
    }
    let Some(chol) = r.clone().cholesky() else {
        return f64::NEG_INFINITY;
    };
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let inv = chol.inverse();
    let mf = m as f64;
    mf * ln_gamma(df / 2.0) - ln_mv_gamma(m, df / 2.0) - 0.5 * (df + mf + 1.0) * log_det
        - 0.5 * df * (0..m).map(|i| inv[(i, i)].ln()).sum::<f64>()
}

/// `log(mean(exp(values)))` without overflow.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (s / values.len() as f64).ln()
}

/// Linear-interpolation quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, q)
}

/// Log-determinant from a Cholesky factor's diagonal.
pub fn chol_log_det(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}
