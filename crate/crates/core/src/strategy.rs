//! What-if pit strategies and the degradation-rate pit window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data::Compound;
use crate::error::{Error, Result};
use crate::forecast::{central_intervals, current_rate_draws, projected_fuel, Interval};
use crate::hmc::{quantile_sorted, PosteriorDraws};
use crate::model::{ModelKind, SKEWT_DOF};

/// Seconds lost to a pit stop when not configured otherwise.
pub const DEFAULT_PIT_LOSS_S: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    StayOut,
    /// New tires from race lap `lap` onward.
    Pit { lap: u32, compound: Compound },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub a: Strategy,
    pub b: Strategy,
    pub horizon: u32,
    pub pit_loss_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub a: Strategy,
    pub b: Strategy,
    pub first_lap: u32,
    /// Laps simulated after clipping at the race end.
    pub horizon: u32,
    pub total_a: Vec<f64>,
    pub total_b: Vec<f64>,
    /// `total_a − total_b` per posterior draw; negative favours `a`.
    pub delta: Vec<f64>,
    pub delta_median: f64,
    pub delta_intervals: Vec<Interval>,
    pub warnings: Vec<String>,
}

/// Shared random inputs for one posterior draw, so both strategies see the
/// same noise.
struct Shocks {
    eta: Vec<f64>,
    eps: Vec<f64>,
    left: Vec<f64>,
    mag: Vec<f64>,
}

impl Shocks {
    fn draw(rng: &mut ChaCha8Rng, h: usize, student: &StudentT<f64>) -> Self {
        let mut s = Shocks {
            eta: Vec::with_capacity(h),
            eps: Vec::with_capacity(h),
            left: Vec::with_capacity(h),
            mag: Vec::with_capacity(h),
        };
        for _ in 0..h {
            s.eta.push(StandardNormal.sample(rng));
            s.eps.push(StandardNormal.sample(rng));
            s.left.push(rng.random::<f64>());
            s.mag.push(student.sample(rng).abs());
        }
        s
    }
}

/// Inputs of the forward simulation for one posterior draw.
struct DrawState {
    alpha: f64,
    rate: f64,
    compound: Compound,
}

fn simulate_total(
    draws: &PosteriorDraws,
    i: usize,
    start: &DrawState,
    strategy: Strategy,
    laps: &[(u32, f64)],
    shocks: &Shocks,
    pit_loss: f64,
) -> f64 {
    let p = draws.params(i);
    let mut alpha = start.alpha;
    let mut rate = start.rate;
    let mut compound = start.compound;
    let mut total = 0.0;
    for (k, &(lap, fuel)) in laps.iter().enumerate() {
        match strategy {
            Strategy::Pit { lap: pit, compound: c } if pit == lap => {
                alpha = p.reset_level(c) + p.sigma_eta * shocks.eta[k];
                compound = c;
                rate = p.initial_rate(c);
                total += pit_loss;
            }
            _ => {
                alpha += rate + p.sigma_eta * shocks.eta[k];
            }
        }
        let loc = alpha + p.gamma * fuel;
        total += match p.lambda {
            None => loc + p.sigma_eps * shocks.eps[k],
            Some(l) => {
                if shocks.left[k] < 0.5 * (1.0 - l) {
                    loc - p.sigma_eps * (1.0 - l) * shocks.mag[k]
                } else {
                    loc + p.sigma_eps * (1.0 + l) * shocks.mag[k]
                }
            }
        };
        // α_{t+1} = α_t + ν_t, then ν_{t+1} = ν_t + β[c_t]
        rate += p.rate_growth(compound);
    }
    total
}

fn check_strategy(s: Strategy, first: u32, horizon: u32) -> Result<()> {
    if let Strategy::Pit { lap, .. } = s {
        if lap < first || lap >= first + horizon {
            return Err(Error::domain(format!(
                "pit lap {lap} outside the horizon [{first}, {})",
                first + horizon
            )));
        }
    }
    Ok(())
}

/// Simulates both strategies from the end of the fitted series for every
/// posterior draw, with common random numbers, and returns the distribution
/// of the cumulative time difference.
pub fn what_if(draws: &PosteriorDraws, req: &WhatIfRequest) -> Result<WhatIfResult> {
    if req.horizon == 0 {
        return Err(Error::domain("horizon must be at least one lap"));
    }
    if !(req.pit_loss_s >= 0.0) {
        return Err(Error::domain("pit loss must be non-negative"));
    }
    let series = draws.series();
    let last = series.lap(series.len() - 1);
    let total_laps = series.total_race_laps();
    let first = last.lap_number + 1;
    if first > total_laps {
        return Err(Error::domain("the race is already complete"));
    }
    check_strategy(req.a, first, req.horizon)?;
    check_strategy(req.b, first, req.horizon)?;

    let mut warnings = Vec::new();
    let mut horizon = req.horizon;
    if first + horizon - 1 > total_laps {
        horizon = total_laps - first + 1;
        warnings.push(format!("horizon clipped to {horizon} laps at the race end"));
    }
    if matches!(draws.kind(), ModelKind::Base | ModelKind::SkewT)
        && [req.a, req.b].iter().any(|s| matches!(s, Strategy::Pit { .. }))
    {
        warnings.push("model has a single reset level; compound choice does not change the pace".into());
    }
    let laps: Vec<(u32, f64)> = (first..first + horizon)
        .map(|l| (l, projected_fuel(series, l)))
        .collect();

    let student = StudentT::new(SKEWT_DOF).expect("positive dof");
    let n = draws.total_draws();
    let mut total_a = Vec::with_capacity(n);
    let mut total_b = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        rng.set_stream(i as u64);
        let shocks = Shocks::draw(&mut rng, laps.len(), &student);
        let start = DrawState {
            alpha: draws.last_alpha(i),
            rate: draws.last_rate(i),
            compound: last.compound,
        };
        total_a.push(simulate_total(draws, i, &start, req.a, &laps, &shocks, req.pit_loss_s));
        total_b.push(simulate_total(draws, i, &start, req.b, &laps, &shocks, req.pit_loss_s));
    }
    let delta: Vec<f64> = total_a.iter().zip(&total_b).map(|(a, b)| a - b).collect();
    let mut sorted = delta.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(WhatIfResult {
        a: req.a,
        b: req.b,
        first_lap: first,
        horizon,
        delta_median: quantile_sorted(&sorted, 0.5),
        delta_intervals: central_intervals(&delta, &[0.5, 0.9]),
        total_a,
        total_b,
        delta,
        warnings,
    })
}

/// Posterior of the current degradation rate against a pit threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStatus {
    pub median: f64,
    pub q5: f64,
    pub q95: f64,
    pub threshold: f64,
    /// The posterior median exceeds the threshold.
    pub alert: bool,
}

pub fn pit_window(draws: &PosteriorDraws, threshold: f64) -> Result<RateStatus> {
    if !(threshold > 0.0) {
        return Err(Error::domain("rate threshold must be positive"));
    }
    let mut r = current_rate_draws(draws);
    r.sort_by(f64::total_cmp);
    let median = quantile_sorted(&r, 0.5);
    Ok(RateStatus {
        median,
        q5: quantile_sorted(&r, 0.05),
        q95: quantile_sorted(&r, 0.95),
        threshold,
        alert: median > threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RaceSeries;
    use crate::model::Params;
    use crate::testing::{point_draws, series};
    use Compound::{Hard, Medium};

    fn stint(n: usize) -> RaceSeries {
        series(&vec![(71.0, 1, Medium); n], 30)
    }

    fn req(a: Strategy, b: Strategy, horizon: u32) -> WhatIfRequest {
        WhatIfRequest { a, b, horizon, pit_loss_s: DEFAULT_PIT_LOSS_S, seed: 11 }
    }

    #[test]
    fn identical_strategies_give_zero_delta() {
        let s = stint(10);
        let points: Vec<_> = (0..50)
            .map(|i| {
                let p = Params::skewt(0.03, 0.3 + 0.001 * i as f64, 0.1, 0.05, 69.0, 0.3);
                (p, (0..10).map(|t| 69.0 + 0.05 * t as f64).collect())
            })
            .collect();
        let d = point_draws(&s, &points);
        let pit = Strategy::Pit { lap: 13, compound: Hard };
        for st in [Strategy::StayOut, pit] {
            let r = what_if(&d, &req(st, st, 5)).unwrap();
            assert_eq!(r.delta.len(), 50);
            assert!(r.delta.iter().all(|&x| x == 0.0));
        }
        let r = what_if(&d, &req(pit, Strategy::StayOut, 5)).unwrap();
        assert!(r.warnings.iter().any(|w| w.contains("single reset")));
    }

    #[test]
    fn pitting_never_slower_without_noise() {
        let s = stint(10);
        let tiny = 1e-9;
        // current pace equals the fresh-tire pace, so a stop only removes wear
        let p = Params::compound(0.03, tiny, tiny, [0.04, 0.04, 0.04], [69.0, 69.0, 69.0]);
        let d = point_draws(&s, &[(p, vec![69.0; 10])]);
        for lap in 11..=18 {
            let a = Strategy::Pit { lap, compound: Hard };
            let r = what_if(&d, &WhatIfRequest { pit_loss_s: 0.0, ..req(a, Strategy::StayOut, 8) }).unwrap();
            // wear removed: (lap − 10) laps of 0.04 s on each of the 19 − lap remaining laps
            let want = -0.04 * (lap - 10) as f64 * (19 - lap) as f64;
            assert!((r.delta[0] - want).abs() < 1e-6, "{lap}: {}", r.delta[0]);
        }
    }

    /// Straight re-derivation of the simulation for one draw of a
    /// time-varying model.
    fn oracle(p: &Params<f64>, alpha0: f64, nu0: f64, pit: Option<u32>, laps: &[(u32, f64)], seed: u64, i: usize, loss: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let student = StudentT::new(SKEWT_DOF).unwrap();
        let n = laps.len();
        let mut eta = vec![0.0; n];
        let mut eps = vec![0.0; n];
        for k in 0..n {
            eta[k] = StandardNormal.sample(&mut rng);
            eps[k] = StandardNormal.sample(&mut rng);
            let _: f64 = rng.random();
            let _: f64 = student.sample(&mut rng);
        }
        let (mut a, mut nu, mut c, mut total) = (alpha0, nu0, Medium, 0.0);
        for (k, &(lap, fuel)) in laps.iter().enumerate() {
            if pit == Some(lap) {
                c = Hard;
                a = p.reset_level(Hard) + p.sigma_eta * eta[k];
                nu = p.initial_rate(Hard);
                total += loss;
            } else {
                a = a + nu + p.sigma_eta * eta[k];
            }
            total += a + p.gamma * fuel + p.sigma_eps * eps[k];
            nu += p.rate_growth(c);
        }
        total
    }

    #[test]
    fn matches_offline_recomputation() {
        let s = stint(12);
        let points: Vec<_> = (0..20)
            .map(|i| {
                let p = Params::time_varying(
                    0.03,
                    0.3,
                    0.1,
                    [0.005, 0.01 + 0.0005 * i as f64, 0.02],
                    [69.5, 69.0, 68.5],
                    -0.05,
                );
                (p, (0..12).map(|t| 69.0 + 0.03 * t as f64 + 0.01 * i as f64).collect())
            })
            .collect();
        let d = point_draws(&s, &points);
        let pit = Strategy::Pit { lap: 15, compound: Hard };
        let r = what_if(&d, &req(pit, Strategy::StayOut, 10)).unwrap();
        let burn = s.lap(11).fuel_kg / 18.0;
        let laps: Vec<(u32, f64)> = (13..23).map(|l| (l, s.lap(11).fuel_kg - burn * (l - 12) as f64)).collect();
        let mut want = Vec::new();
        for i in 0..20 {
            let p = d.params(i);
            let nu_t = d.column("nu_t[12]").unwrap()[i];
            let a0 = d.last_alpha(i);
            let ta = oracle(&p, a0, nu_t, Some(15), &laps, 11, i, DEFAULT_PIT_LOSS_S);
            let tb = oracle(&p, a0, nu_t, None, &laps, 11, i, DEFAULT_PIT_LOSS_S);
            want.push(ta - tb);
        }
        for (x, y) in r.delta.iter().zip(&want) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        let mut sorted = want.clone();
        sorted.sort_by(f64::total_cmp);
        assert!((r.delta_median - quantile_sorted(&sorted, 0.5)).abs() < 1e-9);
    }

    #[test]
    fn horizon_is_clipped_and_validated() {
        let s = stint(25);
        let p = Params::base(0.03, 0.3, 0.1, 0.05, 69.0);
        let d = point_draws(&s, &[(p, vec![69.0; 25])]);
        let r = what_if(&d, &req(Strategy::StayOut, Strategy::StayOut, 10)).unwrap();
        assert_eq!(r.horizon, 5);
        assert!(r.warnings.iter().any(|w| w.contains("clipped")));
        let late = Strategy::Pit { lap: 40, compound: Hard };
        assert!(what_if(&d, &req(late, Strategy::StayOut, 10)).is_err());
        assert!(what_if(&d, &req(Strategy::StayOut, Strategy::StayOut, 0)).is_err());
    }

    #[test]
    fn pit_window_alerts_on_median() {
        let s = stint(4);
        let points: Vec<_> = [0.1, 0.2, 0.3]
            .iter()
            .map(|&nu| (Params::base(0.03, 0.3, 0.1, nu, 69.0), vec![69.0; 4]))
            .collect();
        let d = point_draws(&s, &points);
        assert!(pit_window(&d, 0.15).unwrap().alert);
        assert!(!pit_window(&d, 0.2).unwrap().alert);
        assert!(pit_window(&d, 0.0).is_err());
    }
}
