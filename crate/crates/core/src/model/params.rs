use serde::{Deserialize, Serialize};

use super::ModelKind;
use crate::data::Compound;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Drift and reset structure of the latent pace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dynamics", rename_all = "snake_case")]
pub enum Dynamics<T> {
    Linear {
        nu: T,
        alpha_reset: T,
    },
    PerCompound {
        nu: [T; 3],
        alpha_reset: [T; 3],
    },
    Accelerating {
        beta: [T; 3],
        alpha_reset: [T; 3],
        nu_reset: T,
    },
}

/// Static parameters of one model. Also used as the gradient container.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    /// Seconds per kg of fuel.
    pub gamma: T,
    pub sigma_eps: T,
    pub sigma_eta: T,
    pub dynamics: Dynamics<T>,
    /// Skewness of the observation error; `Some` only for the skewed-t model.
    pub lambda: Option<T>,
}

/// Latent pace per lap position, plus the drift track for the time-varying model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path<T> {
    pub alpha: Vec<T>,
    pub nu: Option<Vec<T>>,
}

impl<T: Scalar> Path<T> {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

impl<T: Scalar> Params<T> {
    pub fn base(gamma: T, sigma_eps: T, sigma_eta: T, nu: T, alpha_reset: T) -> Self {
        Params {
            gamma,
            sigma_eps,
            sigma_eta,
            dynamics: Dynamics::Linear { nu, alpha_reset },
            lambda: None,
        }
    }

    pub fn compound(gamma: T, sigma_eps: T, sigma_eta: T, nu: [T; 3], alpha_reset: [T; 3]) -> Self {
        Params {
            gamma,
            sigma_eps,
            sigma_eta,
            dynamics: Dynamics::PerCompound { nu, alpha_reset },
            lambda: None,
        }
    }

    pub fn time_varying(
        gamma: T,
        sigma_eps: T,
        sigma_eta: T,
        beta: [T; 3],
        alpha_reset: [T; 3],
        nu_reset: T,
    ) -> Self {
        Params {
            gamma,
            sigma_eps,
            sigma_eta,
            dynamics: Dynamics::Accelerating {
                beta,
                alpha_reset,
                nu_reset,
            },
            lambda: None,
        }
    }

    pub fn skewt(gamma: T, sigma_eps: T, sigma_eta: T, nu: T, alpha_reset: T, lambda: T) -> Self {
        Params {
            lambda: Some(lambda),
            ..Params::base(gamma, sigma_eps, sigma_eta, nu, alpha_reset)
        }
    }

    pub fn kind(&self) -> ModelKind {
        match (&self.dynamics, self.lambda) {
            (Dynamics::Linear { .. }, Some(_)) => ModelKind::SkewT,
            (Dynamics::Linear { .. }, None) => ModelKind::Base,
            (Dynamics::PerCompound { .. }, _) => ModelKind::Compound,
            (Dynamics::Accelerating { .. }, _) => ModelKind::TimeVarying,
        }
    }

    /// Pace level after fitting a fresh set of `c`.
    pub fn reset_level(&self, c: Compound) -> T {
        match &self.dynamics {
            Dynamics::Linear { alpha_reset, .. } => *alpha_reset,
            Dynamics::PerCompound { alpha_reset, .. }
            | Dynamics::Accelerating { alpha_reset, .. } => alpha_reset[c.index()],
        }
    }

    /// Degradation rate at the start of a stint on `c`.
    pub fn initial_rate(&self, c: Compound) -> T {
        match &self.dynamics {
            Dynamics::Linear { nu, .. } => *nu,
            Dynamics::PerCompound { nu, .. } => nu[c.index()],
            Dynamics::Accelerating { nu_reset, .. } => *nu_reset,
        }
    }

    /// Drift increment per lap on `c` (zero except for the time-varying model).
    pub fn rate_growth(&self, c: Compound) -> T {
        match &self.dynamics {
            Dynamics::Accelerating { beta, .. } => beta[c.index()],
            _ => T::zero(),
        }
    }

    /// Checks every support constraint. `allow_zero_noise` admits σ = 0,
    /// which only forward simulation accepts.
    pub fn validate_with(&self, allow_zero_noise: bool) -> Result<()> {
        let ok_sd = |v: T| {
            if allow_zero_noise {
                v >= T::zero()
            } else {
                v > T::zero()
            }
        };
        let fail = |m: String| Err(Error::domain(m));
        if !ok_sd(self.sigma_eps) {
            return fail(format!("sigma_eps out of support: {:?}", self.sigma_eps));
        }
        if !ok_sd(self.sigma_eta) {
            return fail(format!("sigma_eta out of support: {:?}", self.sigma_eta));
        }
        if !self.gamma.is_finite() {
            return fail("gamma is not finite".into());
        }
        match &self.dynamics {
            Dynamics::Linear { nu, alpha_reset } => {
                if !(*nu >= T::zero()) || !alpha_reset.is_finite() {
                    return fail(format!("nu out of support: {nu:?}"));
                }
            }
            Dynamics::PerCompound { nu, alpha_reset } => {
                if nu.iter().any(|v| !(*v >= T::zero())) || alpha_reset.iter().any(|a| !a.is_finite()) {
                    return fail(format!("nu by compound out of support: {nu:?}"));
                }
            }
            Dynamics::Accelerating {
                beta,
                alpha_reset,
                nu_reset,
            } => {
                if beta.iter().any(|v| !(*v >= T::zero()))
                    || alpha_reset.iter().any(|a| !a.is_finite())
                    || !nu_reset.is_finite()
                {
                    return fail(format!("beta by compound out of support: {beta:?}"));
                }
            }
        }
        if let Some(l) = self.lambda {
            if !(l.abs() < T::one()) {
                return fail(format!("lambda outside (-1, 1): {l:?}"));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(false)
    }

    /// A container of the same shape filled with zeros.
    pub fn zeros_like(&self) -> Self {
        let z = T::zero();
        Params {
            gamma: z,
            sigma_eps: z,
            sigma_eta: z,
            dynamics: match self.dynamics {
                Dynamics::Linear { .. } => Dynamics::Linear { nu: z, alpha_reset: z },
                Dynamics::PerCompound { .. } => Dynamics::PerCompound {
                    nu: [z; 3],
                    alpha_reset: [z; 3],
                },
                Dynamics::Accelerating { .. } => Dynamics::Accelerating {
                    beta: [z; 3],
                    alpha_reset: [z; 3],
                    nu_reset: z,
                },
            },
            lambda: self.lambda.map(|_| z),
        }
    }

    /// Flat values in the canonical order given by [`Params::names`].
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = vec![self.gamma, self.sigma_eps, self.sigma_eta];
        match &self.dynamics {
            Dynamics::Linear { nu, alpha_reset } => v.extend([*nu, *alpha_reset]),
            Dynamics::PerCompound { nu, alpha_reset } => {
                v.extend(nu);
                v.extend(alpha_reset);
            }
            Dynamics::Accelerating {
                beta,
                alpha_reset,
                nu_reset,
            } => {
                v.extend(beta);
                v.extend(alpha_reset);
                v.push(*nu_reset);
            }
        }
        v.extend(self.lambda);
        v
    }

    pub fn from_flat(kind: ModelKind, v: &[T]) -> Result<Self> {
        let need = Self::names(kind).len();
        if v.len() != need {
            return Err(Error::domain(format!(
                "{kind} expects {need} static parameters, got {}",
                v.len()
            )));
        }
        let arr = |i: usize| [v[i], v[i + 1], v[i + 2]];
        Ok(match kind {
            ModelKind::Base => Params::base(v[0], v[1], v[2], v[3], v[4]),
            ModelKind::SkewT => Params::skewt(v[0], v[1], v[2], v[3], v[4], v[5]),
            ModelKind::Compound => Params::compound(v[0], v[1], v[2], arr(3), arr(6)),
            ModelKind::TimeVarying => Params::time_varying(v[0], v[1], v[2], arr(3), arr(6), v[9]),
        })
    }

    pub fn names(kind: ModelKind) -> Vec<String> {
        let mut n: Vec<String> = ["gamma", "sigma_eps", "sigma_eta"].map(String::from).into();
        let per = |base: &str| Compound::ALL.map(|c| format!("{base}[{}]", c.name()));
        match kind {
            ModelKind::Base => n.extend(["nu".into(), "alpha_reset".into()]),
            ModelKind::SkewT => n.extend(["nu".into(), "alpha_reset".into(), "lambda".into()]),
            ModelKind::Compound => {
                n.extend(per("nu"));
                n.extend(per("alpha_reset"));
            }
            ModelKind::TimeVarying => {
                n.extend(per("beta"));
                n.extend(per("alpha_reset"));
                n.push("nu_reset".into());
            }
        }
        n
    }

    /// Elementwise `self + other` for same-shaped containers.
    pub fn add(&self, other: &Self) -> Self {
        let a = self.to_flat();
        let b = other.to_flat();
        let sum: Vec<T> = a.iter().zip(&b).map(|(x, y)| *x + *y).collect();
        Params::from_flat(self.kind(), &sum).expect("same shape")
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let flat: Vec<U> = self.to_flat().iter().map(|v| U::lit(v.to_f64_lossy())).collect();
        Params::from_flat(self.kind(), &flat).expect("same shape")
    }
}
