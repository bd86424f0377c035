//! Unconstrained, non-centred posterior used by the sampler.
//!
//! Coordinates are the transformed statics followed by one standardised
//! innovation `z_t` per lap, with
//! `α_t = α_reset[c_t] + σ_η z_t` on fresh tires and
//! `α_t = α_{t−1} + ν_{t−1} + σ_η z_t` otherwise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::{backprop_drift, drift_track, observation_terms, reset_adj_slot, SeriesData};
use super::{ModelKind, Params, Path, Prior, PriorSpec};
use crate::data::RaceSeries;
use crate::error::{Error, Result};
use crate::hmc::LogDensity;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    /// x = exp(u)
    Log,
    /// x = tanh(u)
    Tanh,
}

impl Transform {
    fn forward(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp(),
            Transform::Tanh => u.tanh(),
        }
    }

    fn inverse(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Tanh => x.atanh(),
        }
    }

    /// (dx/du, log|dx/du|, d log|dx/du| / du) at constrained value `x`.
    fn jacobian(self, u: f64, x: f64) -> (f64, f64, f64) {
        match self {
            Transform::Identity => (1.0, 0.0, 0.0),
            Transform::Log => (x, u, 1.0),
            Transform::Tanh => {
                let d = 1.0 - x * x;
                (d, d.ln(), -2.0 * x)
            }
        }
    }
}

fn transforms(kind: ModelKind) -> Vec<Transform> {
    use Transform::*;
    let mut t = vec![Log, Log, Log];
    match kind {
        ModelKind::Base | ModelKind::SkewT => t.extend([Log, Identity]),
        ModelKind::Compound => t.extend([Log, Log, Log, Identity, Identity, Identity]),
        ModelKind::TimeVarying => t.extend([Log, Log, Log, Identity, Identity, Identity, Identity]),
    }
    if kind == ModelKind::SkewT {
        t.push(Tanh);
    }
    t
}

#[derive(Debug, Clone)]
pub struct PosteriorTarget {
    kind: ModelKind,
    data: SeriesData<f64>,
    priors: Vec<Prior>,
    transforms: Vec<Transform>,
}

impl PosteriorTarget {
    pub fn new(kind: ModelKind, series: &RaceSeries, priors: &PriorSpec) -> Result<Self> {
        priors.validate()?;
        Ok(PosteriorTarget {
            kind,
            data: SeriesData::new(series),
            priors: priors.for_kind(kind),
            transforms: transforms(kind),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_static(&self) -> usize {
        self.transforms.len()
    }

    pub fn n_laps(&self) -> usize {
        self.data.len()
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn constrain_statics(&self, x: &[f64]) -> Params<f64> {
        let flat: Vec<f64> = self
            .transforms
            .iter()
            .zip(x)
            .map(|(t, u)| t.forward(*u))
            .collect();
        Params::from_flat(self.kind, &flat).expect("static layout")
    }

    fn alpha_from(&self, params: &Params<f64>, z: &[f64], drift: &[f64]) -> Vec<f64> {
        let d = &self.data;
        let mut alpha = Vec::with_capacity(z.len());
        for t in 0..z.len() {
            let mean = if d.fresh[t] {
                params.reset_level(d.compound[t])
            } else {
                alpha[t - 1] + drift[t - 1]
            };
            alpha.push(mean + params.sigma_eta * z[t]);
        }
        alpha
    }

    /// Maps an unconstrained point to statics and latent path.
    pub fn constrain(&self, x: &[f64]) -> (Params<f64>, Path<f64>) {
        let k = self.n_static();
        let params = self.constrain_statics(&x[..k]);
        let drift = drift_track(&params, &self.data);
        let alpha = self.alpha_from(&params, &x[k..], &drift);
        let nu = (self.kind == ModelKind::TimeVarying).then_some(drift);
        (params, Path { alpha, nu })
    }

    pub fn unconstrain(&self, params: &Params<f64>, path: &Path<f64>) -> Result<Vec<f64>> {
        if params.kind() != self.kind {
            return Err(Error::domain(format!("expected {} parameters", self.kind)));
        }
        if path.len() != self.n_laps() {
            return Err(Error::domain("latent path length does not match the series"));
        }
        params.validate()?;
        let mut x: Vec<f64> = self
            .transforms
            .iter()
            .zip(params.to_flat())
            .map(|(t, v)| t.inverse(v))
            .collect();
        let drift = drift_track(params, &self.data);
        let d = &self.data;
        for t in 0..path.len() {
            let mean = if d.fresh[t] {
                params.reset_level(d.compound[t])
            } else {
                path.alpha[t - 1] + drift[t - 1]
            };
            x.push((path.alpha[t] - mean) / params.sigma_eta);
        }
        Ok(x)
    }

    /// Statics at the prior centres, jittered on the unconstrained scale,
    /// with small random innovations.
    pub fn initial_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for (p, t) in self.priors.iter().zip(&self.transforms) {
            let c = match t {
                Transform::Log => p.center().max(0.5 * p.sd()).max(1e-3),
                Transform::Tanh => p.center().clamp(-0.9, 0.9),
                Transform::Identity => p.center(),
            };
            let u = t.inverse(c);
            let jitter = match t {
                Transform::Identity => 0.5 * p.sd(),
                _ => 0.3,
            };
            x.push(u + jitter * (2.0 * rng.random::<f64>() - 1.0));
        }
        for _ in 0..self.n_laps() {
            x.push(2.0 * rng.random::<f64>() - 1.0);
        }
        x
    }
}

impl LogDensity for PosteriorTarget {
    fn dim(&self) -> usize {
        self.n_static() + self.n_laps()
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.n_static();
        let n = self.n_laps();
        let d = &self.data;
        let u = &x[..k];
        let z = &x[k..];
        grad.iter_mut().for_each(|g| *g = 0.0);

        let params = self.constrain_statics(u);
        let flat = params.to_flat();

        let mut total = 0.0;
        let mut gflat = vec![0.0; k];
        for i in 0..k {
            let (v, g) = self.priors[i].logpdf_grad(flat[i]);
            total += v;
            gflat[i] = g;
        }
        if !total.is_finite() || params.validate().is_err() {
            return f64::NEG_INFINITY;
        }

        let drift = drift_track(&params, d);
        let alpha = self.alpha_from(&params, z, &drift);

        let mut gp = params.zeros_like();
        let mut ga = vec![0.0; n];
        total += observation_terms(&params, d, &alpha, &mut gp, &mut ga);
        for &zt in z {
            total += -HALF_LN_2PI - 0.5 * zt * zt;
        }

        // reverse sweep: a_t = ∂/∂α_t including every later lap in the stint
        let mut drift_adj = vec![0.0; n];
        let mut carry = 0.0;
        for t in (0..n).rev() {
            let continues = t + 1 < n && !d.fresh[t + 1];
            let a = ga[t] + if continues { carry } else { 0.0 };
            grad[k + t] = a * params.sigma_eta - z[t];
            gp.sigma_eta += a * z[t];
            if d.fresh[t] {
                *reset_adj_slot(&mut gp, d.compound[t]) += a;
            } else {
                drift_adj[t - 1] += a;
            }
            carry = a;
        }
        backprop_drift(&mut gp, d, &drift_adj);

        for (i, g) in gp.to_flat().into_iter().enumerate() {
            gflat[i] += g;
        }
        for i in 0..k {
            let (dx, logj, dlogj) = self.transforms[i].jacobian(u[i], flat[i]);
            total += logj;
            grad[i] = gflat[i] * dx + dlogj;
        }
        if total.is_nan() {
            return f64::NEG_INFINITY;
        }
        total
    }
}
