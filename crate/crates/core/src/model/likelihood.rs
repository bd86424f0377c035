use super::{log_prior_grad, Dynamics, Params, Path, PriorSpec};
use crate::data::{Compound, RaceSeries};
use crate::distributions::{normal_kernel, skewt_kernel, skewt_log_norm};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Degrees of freedom of the skewed-t observation error (fixed).
pub const SKEWT_DOF: f64 = 2.0;

/// Per-lap inputs of the likelihood, converted to the working scalar.
#[derive(Debug, Clone)]
pub struct SeriesData<T> {
    pub y: Vec<T>,
    pub fuel: Vec<T>,
    pub compound: Vec<Compound>,
    /// Lap starts on fresh tires (race start or after a stop).
    pub fresh: Vec<bool>,
}

impl<T: Scalar> SeriesData<T> {
    pub fn new(series: &RaceSeries) -> Self {
        SeriesData {
            y: series.laps().iter().map(|l| T::lit(l.lap_time_s)).collect(),
            fuel: series.laps().iter().map(|l| T::lit(l.fuel_kg)).collect(),
            compound: series.compounds(),
            fresh: (0..series.len()).map(|t| series.starts_stint(t)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Drift applied between lap t and t+1 when no stop intervenes.
pub(crate) fn drift_track<T: Scalar>(params: &Params<T>, data: &SeriesData<T>) -> Vec<T> {
    let n = data.len();
    match &params.dynamics {
        Dynamics::Linear { nu, .. } => vec![*nu; n],
        Dynamics::PerCompound { nu, .. } => data.compound.iter().map(|c| nu[c.index()]).collect(),
        Dynamics::Accelerating { beta, nu_reset, .. } => {
            let mut out = Vec::with_capacity(n);
            for t in 0..n {
                let v = if data.fresh[t] {
                    *nu_reset
                } else {
                    out[t - 1] + beta[data.compound[t - 1].index()]
                };
                out.push(v);
            }
            out
        }
    }
}

/// Per-lap degradation rate ν_t implied by the statics.
pub fn nu_track<T: Scalar>(params: &Params<T>, series: &RaceSeries) -> Vec<T> {
    drift_track(params, &SeriesData::new(series))
}

/// Accumulates `∂/∂drift_t` into the static gradient.
pub(crate) fn backprop_drift<T: Scalar>(
    grad: &mut Params<T>,
    data: &SeriesData<T>,
    drift_adj: &[T],
) {
    let n = data.len();
    match &mut grad.dynamics {
        Dynamics::Linear { nu, .. } => {
            *nu = *nu + drift_adj.iter().copied().sum::<T>();
        }
        Dynamics::PerCompound { nu, .. } => {
            for t in 0..n {
                let c = data.compound[t].index();
                nu[c] = nu[c] + drift_adj[t];
            }
        }
        Dynamics::Accelerating { beta, nu_reset, .. } => {
            let mut carry = T::zero();
            for s in (0..n).rev() {
                let continues = s + 1 < n && !data.fresh[s + 1];
                let total = drift_adj[s] + if continues { carry } else { T::zero() };
                if data.fresh[s] {
                    *nu_reset = *nu_reset + total;
                } else {
                    let c = data.compound[s - 1].index();
                    beta[c] = beta[c] + total;
                }
                carry = total;
            }
        }
    }
}

pub(crate) fn reset_adj_slot<T: Scalar>(grad: &mut Params<T>, c: Compound) -> &mut T {
    match &mut grad.dynamics {
        Dynamics::Linear { alpha_reset, .. } => alpha_reset,
        Dynamics::PerCompound { alpha_reset, .. } | Dynamics::Accelerating { alpha_reset, .. } => {
            &mut alpha_reset[c.index()]
        }
    }
}

/// Observation log-density summed over laps, with gradients wrt α_t and
/// the observation statics (γ, σ_ε, λ) accumulated into `grad`.
pub(crate) fn observation_terms<T: Scalar>(
    params: &Params<T>,
    data: &SeriesData<T>,
    alpha: &[T],
    grad: &mut Params<T>,
    grad_alpha: &mut [T],
) -> T {
    let mut total = T::zero();
    match params.lambda {
        None => {
            for t in 0..data.len() {
                let mean = alpha[t] + params.gamma * data.fuel[t];
                let (v, _, dm, ds) = normal_kernel(data.y[t], mean, params.sigma_eps);
                total = total + v;
                grad_alpha[t] = grad_alpha[t] + dm;
                grad.gamma = grad.gamma + dm * data.fuel[t];
                grad.sigma_eps = grad.sigma_eps + ds;
            }
        }
        Some(lambda) => {
            let dof = T::lit(SKEWT_DOF);
            let norm = T::lit(skewt_log_norm(SKEWT_DOF));
            let mut dl = T::zero();
            for t in 0..data.len() {
                let loc = alpha[t] + params.gamma * data.fuel[t];
                let (v, g) = skewt_kernel(data.y[t], loc, params.sigma_eps, lambda, dof, norm);
                total = total + v;
                grad_alpha[t] = grad_alpha[t] + g[1];
                grad.gamma = grad.gamma + g[1] * data.fuel[t];
                grad.sigma_eps = grad.sigma_eps + g[2];
                dl = dl + g[3];
            }
            grad.lambda = Some(grad.lambda.unwrap_or_else(T::zero) + dl);
        }
    }
    total
}

fn check_lengths<T: Scalar>(path: &Path<T>, series: &RaceSeries) -> Result<()> {
    if path.len() != series.len() {
        return Err(Error::domain(format!(
            "latent path has {} laps, series has {}",
            path.len(),
            series.len()
        )));
    }
    Ok(())
}

pub fn log_likelihood<T: Scalar>(params: &Params<T>, path: &Path<T>, series: &RaceSeries) -> Result<T> {
    Ok(log_likelihood_grad(params, path, series)?.0)
}

/// Joint log-density of observations and latent path given the statics:
/// observation terms, the initial-state term and every transition term.
/// Returns `-∞` (with zero gradient) outside the parameter support.
pub fn log_likelihood_grad<T: Scalar>(
    params: &Params<T>,
    path: &Path<T>,
    series: &RaceSeries,
) -> Result<(T, Params<T>, Vec<T>)> {
    check_lengths(path, series)?;
    let data = SeriesData::new(series);
    Ok(likelihood_on(params, &path.alpha, &data))
}

pub(crate) fn likelihood_on<T: Scalar>(
    params: &Params<T>,
    alpha: &[T],
    data: &SeriesData<T>,
) -> (T, Params<T>, Vec<T>) {
    let n = data.len();
    let mut grad = params.zeros_like();
    let mut ga = vec![T::zero(); n];
    if params.validate().is_err() {
        return (T::neg_infinity(), grad, ga);
    }
    let mut total = observation_terms(params, data, alpha, &mut grad, &mut ga);

    let drift = drift_track(params, data);
    let mut drift_adj = vec![T::zero(); n];
    for t in 0..n {
        let c = data.compound[t];
        let mean = if data.fresh[t] {
            params.reset_level(c)
        } else {
            alpha[t - 1] + drift[t - 1]
        };
        let (v, dx, dm, ds) = normal_kernel(alpha[t], mean, params.sigma_eta);
        total = total + v;
        ga[t] = ga[t] + dx;
        grad.sigma_eta = grad.sigma_eta + ds;
        if data.fresh[t] {
            let slot = reset_adj_slot(&mut grad, c);
            *slot = *slot + dm;
        } else {
            ga[t - 1] = ga[t - 1] + dm;
            drift_adj[t - 1] = drift_adj[t - 1] + dm;
        }
    }
    backprop_drift(&mut grad, data, &drift_adj);
    (total, grad, ga)
}

pub fn log_posterior<T: Scalar>(
    params: &Params<T>,
    path: &Path<T>,
    series: &RaceSeries,
    priors: &PriorSpec,
) -> Result<T> {
    Ok(log_posterior_grad(params, path, series, priors)?.0)
}

pub fn log_posterior_grad<T: Scalar>(
    params: &Params<T>,
    path: &Path<T>,
    series: &RaceSeries,
    priors: &PriorSpec,
) -> Result<(T, Params<T>, Vec<T>)> {
    let (lp, gp) = log_prior_grad(params, priors)?;
    let (ll, gl, ga) = log_likelihood_grad(params, path, series)?;
    if !(lp.is_finite() && ll.is_finite()) {
        return Ok((T::neg_infinity(), params.zeros_like(), vec![T::zero(); path.len()]));
    }
    Ok((lp + ll, gp.add(&gl), ga))
}
