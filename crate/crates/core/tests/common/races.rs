//! Small random races for property tests.

use proptest::prelude::*;
use stintlab::data::{fuel_at, FuelProfile, LapRecord};
use stintlab::model::Params;
use stintlab::{Compound, RaceSeries};

pub const COMPOUNDS: [Compound; 3] = [Compound::Hard, Compound::Medium, Compound::Soft];

/// Builds a series from stint lengths and compounds. Two race laps are
/// skipped at every stop (in-lap and out-lap), as the CSV loader does.
pub fn race(stints: &[(usize, Compound)], times: &[f64], total: u32) -> RaceSeries {
    let profile = FuelProfile::new(110.0, total).unwrap();
    let mut laps = Vec::new();
    let mut lap = 1u32;
    let mut k = 0;
    for (s, &(len, compound)) in stints.iter().enumerate() {
        if s > 0 {
            lap += 2;
        }
        for _ in 0..len {
            laps.push(LapRecord {
                lap_number: lap,
                lap_time_s: times[k],
                compound,
                stint_index: s as u32 + 1,
                fuel_kg: fuel_at(&profile, lap).unwrap(),
            });
            lap += 1;
            k += 1;
        }
    }
    RaceSeries::new(laps, total).unwrap()
}

/// Stint layouts with at most `max_laps` modelled laps in total.
pub fn layout(max_stints: usize, max_laps: usize) -> impl Strategy<Value = Vec<(usize, Compound)>> {
    prop::collection::vec((1usize..=max_laps, 0usize..3), 1..=max_stints)
        .prop_map(move |v| {
            let mut left = max_laps;
            let mut out = Vec::new();
            for (len, c) in v {
                if left == 0 {
                    break;
                }
                let len = len.min(left);
                left -= len;
                out.push((len, COMPOUNDS[c]));
            }
            out
        })
}

pub fn series_strategy(max_stints: usize, max_laps: usize) -> impl Strategy<Value = RaceSeries> {
    layout(max_stints, max_laps).prop_flat_map(|stints| {
        let n: usize = stints.iter().map(|s| s.0).sum();
        prop::collection::vec(68.0f64..74.0, n).prop_map(move |times| {
            let total = (n + 2 * stints.len() + 5) as u32;
            race(&stints, &times, total)
        })
    })
}

fn pos(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

pub fn base_params() -> impl Strategy<Value = Params<f64>> {
    (pos(0.0, 0.08), pos(0.05, 1.0), pos(0.02, 0.5), pos(0.0, 0.2), pos(66.0, 72.0))
        .prop_map(|(g, se, sh, nu, a)| Params::base(g, se, sh, nu, a))
}

pub fn compound_params() -> impl Strategy<Value = Params<f64>> {
    (
        pos(0.0, 0.08),
        pos(0.05, 1.0),
        pos(0.02, 0.5),
        [pos(0.0, 0.2), pos(0.0, 0.2), pos(0.0, 0.2)],
        [pos(66.0, 72.0), pos(66.0, 72.0), pos(66.0, 72.0)],
    )
        .prop_map(|(g, se, sh, nu, a)| Params::compound(g, se, sh, nu, a))
}

pub fn time_varying_params() -> impl Strategy<Value = Params<f64>> {
    (
        pos(0.0, 0.08),
        pos(0.05, 1.0),
        pos(0.02, 0.5),
        [pos(0.0, 0.03), pos(0.0, 0.03), pos(0.0, 0.03)],
        [pos(66.0, 72.0), pos(66.0, 72.0), pos(66.0, 72.0)],
        pos(-0.2, 0.1),
    )
        .prop_map(|(g, se, sh, b, a, nr)| Params::time_varying(g, se, sh, b, a, nr))
}

pub fn linear_gaussian_params() -> impl Strategy<Value = Params<f64>> {
    prop_oneof![base_params(), compound_params(), time_varying_params()]
}

/// One random linear-Gaussian case: statics of a random kind and a series of
/// at most `max_laps` laps with at least one stop whenever `with_stop`.
pub fn random_case<R: rand::Rng>(rng: &mut R, max_laps: usize, with_stop: bool) -> (Params<f64>, RaceSeries) {
    let n = rng.random_range(if with_stop { 2 } else { 1 }..=max_laps);
    let mut stints = Vec::new();
    let mut left = n;
    while left > 0 {
        let len = if with_stop && stints.is_empty() {
            rng.random_range(1..left.max(2))
        } else {
            rng.random_range(1..=left)
        };
        let len = len.min(left);
        stints.push((len, COMPOUNDS[rng.random_range(0..3)]));
        left -= len;
    }
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(68.0..74.0)).collect();
    let total = (n + 2 * stints.len() + 5) as u32;
    let series = race(&stints, &times, total);
    let kind = rng.random_range(0..3);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let (g, se, sh) = (u(0.0, 0.08), u(0.05, 1.0), u(0.02, 0.5));
    let params = match kind {
        0 => Params::base(g, se, sh, u(0.0, 0.2), u(66.0, 72.0)),
        1 => Params::compound(
            g,
            se,
            sh,
            [u(0.0, 0.2), u(0.0, 0.2), u(0.0, 0.2)],
            [u(66.0, 72.0), u(66.0, 72.0), u(66.0, 72.0)],
        ),
        _ => Params::time_varying(
            g,
            se,
            sh,
            [u(0.0, 0.03), u(0.0, 0.03), u(0.0, 0.03)],
            [u(66.0, 72.0), u(66.0, 72.0), u(66.0, 72.0)],
            u(-0.2, 0.1),
        ),
    };
    (params, series)
}
