//! The four lap-time state-space variants.
//!
//! Every variant observes `y_t = α_t + γ·fuel_t + ε_t` and evolves the latent
//! pace `α_t` as a random walk with drift that is reset on fresh tires:
//!
//! * [`ModelKind::Base`]: one drift `ν` and one reset level.
//! * [`ModelKind::Compound`]: drift and reset level per compound.
//! * [`ModelKind::TimeVarying`]: the drift itself grows by `β[c]` each lap
//!   and restarts at `ν_reset` on fresh tires.
//! * [`ModelKind::SkewT`]: base dynamics with skewed-t observation errors.
//!
//! The race start counts as a stop: `α_1 ~ N(α_reset[c_1], σ_η)`. After a stop
//! the reset level belongs to the compound fitted at the stop.

pub(crate) mod likelihood;
mod params;
mod priors;
mod simulate;
mod target;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use likelihood::{
    log_likelihood, log_likelihood_grad, log_posterior, log_posterior_grad, nu_track,
    SeriesData, SKEWT_DOF,
};
pub use params::{Dynamics, Params, Path};
pub use priors::{default_priors, log_prior, log_prior_grad, ByCompound, Prior, PriorSpec};
pub use simulate::simulate;
pub use target::{PosteriorTarget, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Base,
    Compound,
    TimeVarying,
    SkewT,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Base,
        ModelKind::Compound,
        ModelKind::TimeVarying,
        ModelKind::SkewT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Base => "base",
            ModelKind::Compound => "compound",
            ModelKind::TimeVarying => "timevarying",
            ModelKind::SkewT => "skewt",
        }
    }

    /// Observation noise is Gaussian, so the Kalman filter is exact.
    pub fn is_linear_gaussian(self) -> bool {
        !matches!(self, ModelKind::SkewT)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "base" => Ok(ModelKind::Base),
            "compound" | "extension1" => Ok(ModelKind::Compound),
            "timevarying" | "extension2" => Ok(ModelKind::TimeVarying),
            "skewt" | "skew-t" | "extension3" => Ok(ModelKind::SkewT),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}
