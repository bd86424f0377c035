//! Exact filtering and smoothing of the latent pace for the linear-Gaussian
//! kinds. The state is the scalar α_t; ν_t of the time-varying model is a
//! deterministic function of the statics and enters as a known drift.

use serde::{Deserialize, Serialize};

use crate::data::RaceSeries;
use crate::error::{Error, Result};
use crate::model::likelihood::{drift_track, SeriesData};
use crate::model::Params;
use crate::scalar::Scalar;

/// Negative variances smaller than this are rounding noise and clamped silently.
const CLAMP_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian<T> {
    pub mean: T,
    pub var: T,
}

impl<T: Scalar> Gaussian<T> {
    pub fn sd(&self) -> T {
        self.var.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filtered<T> {
    pub predicted: Vec<Gaussian<T>>,
    pub filtered: Vec<Gaussian<T>>,
    /// One-step-ahead predictive of y_t.
    pub obs: Vec<Gaussian<T>>,
    pub loglik_terms: Vec<T>,
}

impl<T: Scalar> Filtered<T> {
    pub fn loglik(&self) -> T {
        self.loglik_terms.iter().copied().sum()
    }
}

fn clamp_var<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        return v;
    }
    if v < T::lit(-CLAMP_TOL) {
        log::warn!("variance {v:?} clamped to zero");
    }
    T::zero()
}

fn check_kind<T: Scalar>(params: &Params<T>) -> Result<()> {
    if !params.kind().is_linear_gaussian() {
        return Err(Error::Unsupported(
            "exact filtering needs Gaussian observation noise; the skewed-t kind has none",
        ));
    }
    params.validate()
}

pub fn kalman_filter<T: Scalar>(params: &Params<T>, series: &RaceSeries) -> Result<Filtered<T>> {
    check_kind(params)?;
    let d = SeriesData::<T>::new(series);
    let drift = drift_track(params, &d);
    let n = d.len();
    let q = params.sigma_eta * params.sigma_eta;
    let r = params.sigma_eps * params.sigma_eps;
    let half_ln_2pi = T::lit(0.5) * (T::TAU()).ln();

    let mut out = Filtered {
        predicted: Vec::with_capacity(n),
        filtered: Vec::with_capacity(n),
        obs: Vec::with_capacity(n),
        loglik_terms: Vec::with_capacity(n),
    };
    for t in 0..n {
        let pred = if d.fresh[t] {
            Gaussian {
                mean: params.reset_level(d.compound[t]),
                var: q,
            }
        } else {
            let prev = out.filtered[t - 1];
            Gaussian {
                mean: prev.mean + drift[t - 1],
                var: prev.var + q,
            }
        };
        let s = pred.var + r;
        let obs = Gaussian {
            mean: pred.mean + params.gamma * d.fuel[t],
            var: s,
        };
        let v = d.y[t] - obs.mean;
        let k = pred.var / s;
        let filt = Gaussian {
            mean: pred.mean + k * v,
            var: clamp_var(pred.var * r / s),
        };
        out.loglik_terms
            .push(-half_ln_2pi - T::lit(0.5) * (s.ln() + v * v / s));
        out.predicted.push(pred);
        out.filtered.push(filt);
        out.obs.push(obs);
    }
    Ok(out)
}

/// Rauch–Tung–Striebel pass. The gain is zero into a lap on fresh tires,
/// so each stint is smoothed independently.
pub fn rts_smoother<T: Scalar>(
    filter: &Filtered<T>,
    params: &Params<T>,
    series: &RaceSeries,
) -> Result<Vec<Gaussian<T>>> {
    check_kind(params)?;
    let n = series.len();
    if filter.filtered.len() != n {
        return Err(Error::domain("filter output does not match the series"));
    }
    let mut sm = filter.filtered.clone();
    for t in (0..n.saturating_sub(1)).rev() {
        if series.starts_stint(t + 1) {
            continue;
        }
        let f = filter.filtered[t];
        let p = filter.predicted[t + 1];
        let j = f.var / p.var;
        sm[t] = Gaussian {
            mean: f.mean + j * (sm[t + 1].mean - p.mean),
            var: clamp_var(f.var + j * j * (sm[t + 1].var - p.var)),
        };
    }
    Ok(sm)
}

pub fn marginal_loglik<T: Scalar>(params: &Params<T>, series: &RaceSeries) -> Result<T> {
    Ok(kalman_filter(params, series)?.loglik())
}
