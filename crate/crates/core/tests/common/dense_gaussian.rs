//! Brute-force joint Gaussian of (α, y) for the linear-Gaussian kinds, built
//! straight from the generative equations with dense matrices.

use nalgebra::{DMatrix, DVector};
use stintlab::model::{Dynamics, Params};
use stintlab::{Compound, RaceSeries};

pub struct DenseGaussian {
    pub mean_alpha: DVector<f64>,
    pub cov_alpha: DMatrix<f64>,
    pub mean_y: DVector<f64>,
    pub cov_y: DMatrix<f64>,
    pub y: DVector<f64>,
}

fn idx(c: Compound) -> usize {
    match c {
        Compound::Hard => 0,
        Compound::Medium => 1,
        Compound::Soft => 2,
    }
}

/// Laps on fresh tires: the first lap and every lap whose stint counter
/// differs from the previous lap's.
pub fn fresh(series: &RaceSeries) -> Vec<bool> {
    let laps = series.laps();
    (0..laps.len())
        .map(|t| t == 0 || laps[t].stint_index != laps[t - 1].stint_index)
        .collect()
}

/// Prior mean of α and the drift between consecutive laps, by direct recursion.
pub fn prior_mean(params: &Params<f64>, series: &RaceSeries) -> Vec<f64> {
    let laps = series.laps();
    let fresh = fresh(series);
    let n = laps.len();
    let mut mean = vec![0.0; n];
    let mut rate = vec![0.0; n];
    for t in 0..n {
        let c = idx(laps[t].compound);
        let reset = match params.dynamics {
            Dynamics::Linear { alpha_reset, .. } => alpha_reset,
            Dynamics::PerCompound { alpha_reset, .. } | Dynamics::Accelerating { alpha_reset, .. } => {
                alpha_reset[c]
            }
        };
        rate[t] = match params.dynamics {
            Dynamics::Linear { nu, .. } => nu,
            Dynamics::PerCompound { nu, .. } => nu[c],
            Dynamics::Accelerating { nu_reset, beta, .. } => {
                if fresh[t] {
                    nu_reset
                } else {
                    rate[t - 1] + beta[idx(laps[t - 1].compound)]
                }
            }
        };
        mean[t] = if fresh[t] { reset } else { mean[t - 1] + rate[t - 1] };
    }
    mean
}

pub fn dense(params: &Params<f64>, series: &RaceSeries) -> DenseGaussian {
    let n = series.len();
    let fresh = fresh(series);
    let mut start = vec![0; n];
    for t in 0..n {
        start[t] = if fresh[t] { t } else { start[t - 1] };
    }
    // α = μ + σ_η L z with L[t][s] = 1 for the innovations s the lap inherits.
    let l = DMatrix::from_fn(n, n, |t, s| if s <= t && s >= start[t] { 1.0 } else { 0.0 });
    let q = params.sigma_eta * params.sigma_eta;
    let cov_alpha = &l * l.transpose() * q;
    let cov_y = &cov_alpha + DMatrix::identity(n, n) * (params.sigma_eps * params.sigma_eps);
    let mean_alpha = DVector::from_vec(prior_mean(params, series));
    let fuel = DVector::from_vec(series.fuel());
    let mean_y = &mean_alpha + fuel * params.gamma;
    DenseGaussian {
        mean_alpha,
        cov_alpha,
        mean_y,
        cov_y,
        y: DVector::from_vec(series.times()),
    }
}

impl DenseGaussian {
    pub fn loglik(&self) -> f64 {
        let n = self.y.len() as f64;
        let chol = self.cov_y.clone().cholesky().expect("positive definite");
        let r = &self.y - &self.mean_y;
        let w = chol.solve(&r);
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * (n * std::f64::consts::TAU.ln() + logdet + r.dot(&w))
    }

    /// Posterior mean and variance of each α_t given all of y.
    pub fn smoothed(&self) -> Vec<(f64, f64)> {
        let chol = self.cov_y.clone().cholesky().expect("positive definite");
        let r = &self.y - &self.mean_y;
        let mean = &self.mean_alpha + &self.cov_alpha * chol.solve(&r);
        let cov = &self.cov_alpha - &self.cov_alpha * chol.solve(&self.cov_alpha);
        (0..self.y.len()).map(|t| (mean[t], cov[(t, t)])).collect()
    }
}
