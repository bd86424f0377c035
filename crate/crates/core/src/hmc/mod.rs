//! Multinomial NUTS with windowed warmup adaptation, posterior draw storage
//! and convergence diagnostics.

mod adapt;
mod diagnostics;
mod draws;
mod nuts;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adapt::{DualAveraging, WindowSchedule};
pub use diagnostics::{
    diagnose, diagnose_chains, ess, ess_bulk, ess_tail, rank_normalized_rhat, split_rhat,
    Diagnostics, QuantityDiagnostics,
};
pub use draws::{quantile_sorted, ChainDraws, PosteriorDraws};
pub use nuts::{Chain, IterStats};

use crate::data::RaceSeries;
use crate::error::{Error, Result};
use crate::model::{ModelKind, PosteriorTarget, PriorSpec};

/// A differentiable log density on ℝⁿ.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density
    /// (`-∞` outside the support).
    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 4 chains × 2000 warmup / 2000 draws.
    Desk,
    /// 4 chains × 15000 warmup / 15000 draws.
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(format!("unknown profile {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup_iters: usize,
    pub sampling_iters: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::profile(Profile::Paper, 0)
    }
}

impl SamplerConfig {
    pub fn profile(profile: Profile, seed: u64) -> Self {
        let iters = match profile {
            Profile::Desk => 2000,
            Profile::Paper => 15000,
        };
        SamplerConfig {
            chains: 4,
            warmup_iters: iters,
            sampling_iters: iters,
            target_accept: 0.9,
            max_tree_depth: 10,
            seed,
        }
    }

    pub fn desk(seed: u64) -> Self {
        Self::profile(Profile::Desk, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.sampling_iters == 0 || self.max_tree_depth == 0 {
            return Err(Error::Config("chain, draw and tree-depth counts must be positive".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target_accept must be in (0, 1), got {}",
                self.target_accept
            )));
        }
        Ok(())
    }
}

/// Adapted step size and diagonal inverse metric, reusable as a warm start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
}

/// Optional warm start for each chain.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub adaptation: Option<Adaptation>,
    /// Initial unconstrained positions, one per chain.
    pub positions: Option<Vec<Vec<f64>>>,
}

/// Runs `cfg.chains` independent chains of NUTS on `target` in parallel.
/// Chain `c` uses the ChaCha8 stream `c` of `cfg.seed`, so results do not
/// depend on scheduling.
pub fn run_chains<D: LogDensity>(
    target: &D,
    init: &(dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync),
    cfg: &SamplerConfig,
    warm: &WarmStart,
) -> Result<Vec<ChainDraws>> {
    cfg.validate()?;
    (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c as u64);
            let start = warm.positions.as_ref().and_then(|p| p.get(c).cloned());
            let mut chain = Chain::initialize(target, &mut rng, init, start)?;
            if let Some(a) = &warm.adaptation {
                chain.set_adaptation(a.clone());
            }
            Ok(chain.run(target, &mut rng, cfg))
        })
        .collect()
}

/// Samples the joint posterior of statics and latent path for one model.
pub fn sample(
    kind: ModelKind,
    priors: &PriorSpec,
    series: &RaceSeries,
    cfg: &SamplerConfig,
) -> Result<PosteriorDraws> {
    sample_warm(kind, priors, series, cfg, &WarmStart::default())
}

pub fn sample_warm(
    kind: ModelKind,
    priors: &PriorSpec,
    series: &RaceSeries,
    cfg: &SamplerConfig,
    warm: &WarmStart,
) -> Result<PosteriorDraws> {
    let target = PosteriorTarget::new(kind, series, priors)?;
    let init = |rng: &mut ChaCha8Rng| target.initial_point(rng);
    let chains = run_chains(&target, &init, cfg, warm)?;
    Ok(PosteriorDraws::new(target, series.clone(), chains))
}
