//! Dense-covariance oracles and a simulator for ARIMA(2,1,2).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stintlab::arima::ArimaParams;

/// Autocovariances γ(0..lags) of the ARMA(2,2) from its MA(∞) weights,
/// for unit innovation variance.
pub fn autocovariance(p: &ArimaParams, lags: usize) -> Vec<f64> {
    let terms = 20_000;
    let mut psi = vec![0.0; terms + lags];
    for j in 0..psi.len() {
        let theta = match j {
            0 => 1.0,
            1 => p.ma[0],
            2 => p.ma[1],
            _ => 0.0,
        };
        let a = if j >= 1 { p.ar[0] * psi[j - 1] } else { 0.0 };
        let b = if j >= 2 { p.ar[1] * psi[j - 2] } else { 0.0 };
        psi[j] = theta + a + b;
    }
    (0..lags).map(|h| (0..terms).map(|j| psi[j] * psi[j + h]).sum()).collect()
}

pub fn joint(p: &ArimaParams, m: usize) -> DMatrix<f64> {
    let g = autocovariance(p, m);
    let s2 = p.innovation_sd * p.innovation_sd;
    DMatrix::from_fn(m, m, |i, j| s2 * g[i.abs_diff(j)])
}

/// Exact log-likelihood of the differences of `y` from the dense covariance.
pub fn dense_loglik(p: &ArimaParams, y: &[f64]) -> f64 {
    let w: Vec<f64> = y.windows(2).map(|v| v[1] - v[0]).collect();
    let m = w.len();
    let chol = joint(p, m).cholesky().unwrap();
    let r = DVector::from_vec(w) - DVector::from_element(m, p.intercept);
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (m as f64 * std::f64::consts::TAU.ln() + logdet + r.dot(&chol.solve(&r)))
}

/// Conditional mean and sd of the next value given `y`.
pub fn dense_forecast(p: &ArimaParams, y: &[f64]) -> (f64, f64) {
    let w: Vec<f64> = y.windows(2).map(|v| v[1] - v[0]).collect();
    let m = w.len();
    let s = joint(p, m + 1);
    let s11 = s.view((0, 0), (m, m)).into_owned();
    let s21 = s.view((m, 0), (1, m)).into_owned();
    let chol = s11.cholesky().unwrap();
    let r = DVector::from_vec(w) - DVector::from_element(m, p.intercept);
    let mean = p.intercept + (&s21 * chol.solve(&r))[0];
    let var = s[(m, m)] - (&s21 * chol.solve(&s21.transpose()))[0];
    (y[y.len() - 1] + mean, var.sqrt())
}

pub fn simulate(p: &ArimaParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = Normal::new(0.0, p.innovation_sd).unwrap();
    let burn = 500;
    let mut w = vec![0.0; n + burn];
    let mut eps = vec![0.0; n + burn];
    for t in 0..n + burn {
        eps[t] = e.sample(&mut rng);
        let mut x = p.intercept + eps[t];
        if t >= 1 {
            x += p.ar[0] * (w[t - 1] - p.intercept) + p.ma[0] * eps[t - 1];
        }
        if t >= 2 {
            x += p.ar[1] * (w[t - 2] - p.intercept) + p.ma[1] * eps[t - 2];
        }
        w[t] = x;
    }
    let mut y = vec![70.0];
    for x in &w[burn..n + burn - 1] {
        y.push(y[y.len() - 1] + x);
    }
    y
}

pub fn params(ar: [f64; 2], ma: [f64; 2], intercept: f64, sd: f64) -> ArimaParams {
    ArimaParams { ar, ma, intercept, innovation_sd: sd }
}
