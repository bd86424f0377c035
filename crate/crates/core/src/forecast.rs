//! One-step-ahead posterior predictive distributions and fitted bands.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data::{Compound, RaceSeries};
use crate::distributions::{skewt_draw, HansenSkewTParams};
use crate::error::{Error, Result};
use crate::hmc::quantile_sorted;
use crate::hmc::PosteriorDraws;
use crate::model::{ModelKind, SKEWT_DOF};

/// Central interval probabilities reported by default.
pub const DEFAULT_PROBS: [f64; 4] = [0.5, 0.9, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub prob: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Inputs known about the lap being forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NextLap {
    pub lap_number: u32,
    pub fuel_kg: f64,
    pub compound: Compound,
    /// The lap is driven on a fresh set fitted at a stop.
    pub fresh_tires: bool,
}

impl NextLap {
    /// The race lap after the series, on the same tires or, with `pit`, on
    /// a fresh set of that compound.
    pub fn after(series: &RaceSeries, pit: Option<Compound>) -> Self {
        let last = series.lap(series.len() - 1);
        let lap_number = last.lap_number + 1;
        NextLap {
            lap_number,
            fuel_kg: projected_fuel(series, lap_number),
            compound: pit.unwrap_or(last.compound),
            fresh_tires: pit.is_some(),
        }
    }
}

/// Fuel on a later race lap, continuing the linear burn from the last
/// lap of the series to empty at the final race lap.
pub fn projected_fuel(series: &RaceSeries, lap_number: u32) -> f64 {
    let last = series.lap(series.len() - 1);
    let total = series.total_race_laps();
    if total <= last.lap_number || lap_number <= last.lap_number {
        return last.fuel_kg;
    }
    let burn = last.fuel_kg / (total - last.lap_number) as f64;
    (last.fuel_kg - burn * (lap_number - last.lap_number) as f64).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDistribution {
    pub target_lap: u32,
    /// Number of laps the posterior was fitted on.
    pub trained_on: usize,
    pub draws: Vec<f64>,
    pub point: f64,
    pub point_kind: PointKind,
    pub intervals: Vec<Interval>,
}

impl ForecastDistribution {
    pub fn interval(&self, prob: f64) -> Option<Interval> {
        self.intervals.iter().copied().find(|i| (i.prob - prob).abs() < 1e-12)
    }

    pub fn mean(&self) -> f64 {
        self.draws.iter().sum::<f64>() / self.draws.len() as f64
    }
}

/// Central intervals from the empirical quantiles of `draws`.
pub fn central_intervals(draws: &[f64], probs: &[f64]) -> Vec<Interval> {
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    probs
        .iter()
        .map(|&p| Interval {
            prob: p,
            lower: quantile_sorted(&s, 0.5 - p / 2.0),
            upper: quantile_sorted(&s, 0.5 + p / 2.0),
        })
        .collect()
}

fn point_of(kind: ModelKind, draws: &[f64]) -> (f64, PointKind) {
    if kind == ModelKind::SkewT {
        let mut s = draws.to_vec();
        s.sort_by(f64::total_cmp);
        (quantile_sorted(&s, 0.5), PointKind::Median)
    } else {
        (draws.iter().sum::<f64>() / draws.len() as f64, PointKind::Mean)
    }
}

/// Predictive draws for the lap after the fitted series: each posterior draw
/// propagates its latent pace one step (resetting on fresh tires) and adds
/// observation noise from the model's error distribution. Draw `i` uses
/// stream `i` of `seed`.
pub fn forecast_next(draws: &PosteriorDraws, next: &NextLap, seed: u64) -> Result<ForecastDistribution> {
    let series = draws.series();
    let last = series.lap(series.len() - 1);
    if next.lap_number <= last.lap_number {
        return Err(Error::domain(format!(
            "lap {} is not after the fitted laps (last {})",
            next.lap_number, last.lap_number
        )));
    }
    if !next.fresh_tires && next.compound != last.compound {
        return Err(Error::domain("compound can only change at a stop"));
    }
    let student = StudentT::new(SKEWT_DOF).expect("positive dof");
    let n = draws.total_draws();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let p = draws.params(i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mean = if next.fresh_tires {
            p.reset_level(next.compound)
        } else {
            draws.last_alpha(i) + draws.last_rate(i)
        };
        let z: f64 = StandardNormal.sample(&mut rng);
        let alpha = mean + p.sigma_eta * z;
        let loc = alpha + p.gamma * next.fuel_kg;
        let y = match p.lambda {
            None => {
                let e: f64 = StandardNormal.sample(&mut rng);
                loc + p.sigma_eps * e
            }
            Some(skewness) => skewt_draw(
                HansenSkewTParams {
                    location: loc,
                    scale: p.sigma_eps,
                    skewness,
                    dof: SKEWT_DOF,
                },
                &student,
                &mut rng,
            ),
        };
        out.push(y);
    }
    let (point, point_kind) = point_of(draws.kind(), &out);
    Ok(ForecastDistribution {
        target_lap: next.lap_number,
        trained_on: series.len(),
        intervals: central_intervals(&out, &DEFAULT_PROBS),
        draws: out,
        point,
        point_kind,
    })
}

/// Forecast of position `target` (1-based) of `series`, which must extend
/// the fitted laps by exactly one.
pub fn one_step_forecast(
    draws: &PosteriorDraws,
    series: &RaceSeries,
    target: usize,
    seed: u64,
) -> Result<ForecastDistribution> {
    let trained = draws.series();
    if target != trained.len() + 1 || target > series.len() {
        return Err(Error::domain(format!(
            "position {target} is not adjacent to the {} fitted laps; refit first",
            trained.len()
        )));
    }
    if series.laps()[..trained.len()] != *trained.laps() {
        return Err(Error::domain("series does not extend the fitted laps"));
    }
    let lap = series.lap(target - 1);
    forecast_next(
        draws,
        &NextLap {
            lap_number: lap.lap_number,
            fuel_kg: lap.fuel_kg,
            compound: lap.compound,
            fresh_tires: series.starts_stint(target - 1),
        },
        seed,
    )
}

/// Posterior draws of the degradation rate carried into the next lap.
pub fn current_rate_draws(draws: &PosteriorDraws) -> Vec<f64> {
    (0..draws.total_draws()).map(|i| draws.last_rate(i)).collect()
}

/// Per-lap posterior summary of a latent quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub position: usize,
    pub lap_number: u32,
    pub observed: f64,
    pub mean: f64,
    pub q2_5: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q97_5: f64,
}

fn band_rows(draws: &PosteriorDraws, prefix: &str, offset: impl Fn(usize, usize) -> f64) -> Vec<Band> {
    let series = draws.series();
    (0..series.len())
        .filter_map(|t| {
            let col = draws.column(&format!("{prefix}[{}]", t + 1))?;
            let mut v: Vec<f64> = col.iter().enumerate().map(|(i, a)| a + offset(i, t)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.sort_by(f64::total_cmp);
            Some(Band {
                position: t + 1,
                lap_number: series.lap(t).lap_number,
                observed: series.lap(t).lap_time_s,
                mean,
                q2_5: quantile_sorted(&v, 0.025),
                q25: quantile_sorted(&v, 0.25),
                q50: quantile_sorted(&v, 0.5),
                q75: quantile_sorted(&v, 0.75),
                q97_5: quantile_sorted(&v, 0.975),
            })
        })
        .collect()
}

/// Smoothed fitted lap time `α_t + γ·fuel_t` per lap.
pub fn fitted_bands(draws: &PosteriorDraws) -> Vec<Band> {
    let fuel = draws.series().fuel();
    let gamma = draws.column("gamma").expect("gamma column").to_vec();
    band_rows(draws, "alpha", |i, t| gamma[i] * fuel[t])
}

/// Per-lap degradation rate ν_t (time-varying model only; empty otherwise).
pub fn rate_bands(draws: &PosteriorDraws) -> Vec<Band> {
    band_rows(draws, "nu_t", |_, _| 0.0)
}

pub fn write_bands<W: std::io::Write>(bands: &[Band], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in bands {
        w.serialize(b).map_err(|e| Error::Fit(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Fit(e.to_string()))
}
