use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use super::{ModelKind, Params};
use crate::data::Compound;
use crate::distributions::TruncatedNormal;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Prior on one scalar. Hyperparameters are standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    /// Normal with the given centre truncated to `[0, ∞)`.
    HalfNormal { mean: f64, sd: f64 },
    TruncatedNormal { mean: f64, sd: f64, lower: f64, upper: f64 },
}

impl Prior {
    fn truncation(&self) -> TruncatedNormal {
        let (mean, sd, lower, upper) = match *self {
            Prior::Normal { mean, sd } => (mean, sd, f64::NEG_INFINITY, f64::INFINITY),
            Prior::HalfNormal { mean, sd } => (mean, sd, 0.0, f64::INFINITY),
            Prior::TruncatedNormal {
                mean,
                sd,
                lower,
                upper,
            } => (mean, sd, lower, upper),
        };
        TruncatedNormal {
            mean,
            sd,
            lower,
            upper,
        }
    }

    pub fn center(&self) -> f64 {
        self.truncation().mean
    }

    pub fn sd(&self) -> f64 {
        self.truncation().sd
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.truncation();
        TruncatedNormal::new(t.mean, t.sd, t.lower, t.upper).map(|_| ())
    }

    /// Log-density and its derivative; `-∞` outside the support.
    pub fn logpdf_grad<T: Scalar>(&self, x: T) -> (T, T) {
        self.truncation().logpdf_grad(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ByCompound<P> {
    pub hard: P,
    pub medium: P,
    pub soft: P,
}

impl<P: Copy> ByCompound<P> {
    pub fn get(&self, c: Compound) -> P {
        match c {
            Compound::Hard => self.hard,
            Compound::Medium => self.medium,
            Compound::Soft => self.soft,
        }
    }

    pub fn to_array(&self) -> [P; 3] {
        [self.hard, self.medium, self.soft]
    }
}

/// Complete prior table. Entries a model kind does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub gamma: Prior,
    pub sigma_eps: Prior,
    pub sigma_eta: Prior,
    pub nu: Prior,
    pub alpha_reset: Prior,
    pub nu_by_compound: ByCompound<Prior>,
    pub alpha_reset_by_compound: ByCompound<Prior>,
    pub beta_by_compound: ByCompound<Prior>,
    pub nu_reset: Prior,
    pub lambda: Prior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        let half = |mean| Prior::HalfNormal { mean, sd: 0.1 };
        let normal = |mean| Prior::Normal { mean, sd: 0.1 };
        PriorSpec {
            gamma: Prior::HalfNormal { mean: 0.03, sd: 0.02 },
            sigma_eps: half(0.3),
            sigma_eta: half(0.1),
            nu: half(0.05),
            alpha_reset: normal(69.0),
            nu_by_compound: ByCompound {
                hard: half(0.01),
                medium: half(0.03),
                soft: half(0.05),
            },
            alpha_reset_by_compound: ByCompound {
                hard: normal(69.5),
                medium: normal(69.0),
                soft: normal(68.5),
            },
            beta_by_compound: ByCompound {
                hard: half(0.005),
                medium: half(0.01),
                soft: half(0.02),
            },
            nu_reset: normal(0.0),
            lambda: Prior::TruncatedNormal {
                mean: 0.5,
                sd: 0.1,
                lower: -1.0,
                upper: 1.0,
            },
        }
    }
}

/// The published prior table; the same table serves every kind.
pub fn default_priors(_kind: ModelKind) -> PriorSpec {
    PriorSpec::default()
}

impl PriorSpec {
    /// Priors in the flat parameter order of `kind`.
    pub fn for_kind(&self, kind: ModelKind) -> Vec<Prior> {
        let mut v = vec![self.gamma, self.sigma_eps, self.sigma_eta];
        match kind {
            ModelKind::Base | ModelKind::SkewT => v.extend([self.nu, self.alpha_reset]),
            ModelKind::Compound => {
                v.extend(self.nu_by_compound.to_array());
                v.extend(self.alpha_reset_by_compound.to_array());
            }
            ModelKind::TimeVarying => {
                v.extend(self.beta_by_compound.to_array());
                v.extend(self.alpha_reset_by_compound.to_array());
                v.push(self.nu_reset);
            }
        }
        if kind == ModelKind::SkewT {
            v.push(self.lambda);
        }
        v
    }

    /// Parameters at the prior centres.
    pub fn centers(&self, kind: ModelKind) -> Params<f64> {
        let c: Vec<f64> = self.for_kind(kind).iter().map(Prior::center).collect();
        Params::from_flat(kind, &c).expect("prior table matches layout")
    }

    pub fn validate(&self) -> Result<()> {
        for kind in ModelKind::ALL {
            for (name, p) in Params::<f64>::names(kind).iter().zip(self.for_kind(kind)) {
                p.validate()
                    .map_err(|e| Error::Config(format!("prior on {name}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: PriorSpec = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("prior table serialises")
    }

    /// Loads an override file; entries it omits keep their default.
    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

pub fn log_prior<T: Scalar>(params: &Params<T>, priors: &PriorSpec) -> Result<T> {
    Ok(log_prior_grad(params, priors)?.0)
}

/// Sum of the component log-densities and its gradient.
pub fn log_prior_grad<T: Scalar>(params: &Params<T>, priors: &PriorSpec) -> Result<(T, Params<T>)> {
    let kind = params.kind();
    let flat = params.to_flat();
    let table = priors.for_kind(kind);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(flat.len());
    for (x, p) in flat.iter().zip(&table) {
        let (v, g) = p.logpdf_grad(*x);
        total = total + v;
        grad.push(g);
    }
    Ok((total, Params::from_flat(kind, &grad)?))
}
