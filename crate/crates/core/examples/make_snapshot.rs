//! Writes the vendored race file used by the acceptance suite.
//!
//! The lap times are synthetic: a 70-lap race on a medium-hard-hard
//! two-stop strategy with fuel burn, compounding tire wear, a warm-up phase
//! on the hards, small driver errors and one large lap-43 loss. Run with
//! `cargo run -p stintlab --example make_snapshot -- data/austria_2025_ham.csv`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

const LAPS: u32 = 70;
const START_FUEL: f64 = 110.0;
const SEED: u64 = 20250629;

struct Stint {
    first: u32,
    last: u32,
    compound: &'static str,
    fresh_pace: f64,
    wear: f64,
    warmup: f64,
}

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data/austria_2025_ham.csv".into());
    let stints = [
        Stint { first: 1, last: 25, compound: "MEDIUM", fresh_pace: 68.9, wear: 0.045, warmup: 0.0 },
        Stint { first: 26, last: 51, compound: "HARD", fresh_pace: 69.2, wear: 0.030, warmup: 0.6 },
        Stint { first: 52, last: 70, compound: "HARD", fresh_pace: 69.2, wear: 0.030, warmup: 0.6 },
    ];
    let gamma = 0.025;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let drift = Normal::new(0.0, 0.05).unwrap();
    let slip = Exp::new(1.0 / 0.8).unwrap();

    let mut csv = String::from("lap,time_s,compound,stint,pit_in,pit_out,fuel_kg\n");
    for (s, st) in stints.iter().enumerate() {
        let mut walk = 0.0;
        for lap in st.first..=st.last {
            let age = (lap - st.first) as f64;
            let fuel = START_FUEL * (LAPS - lap) as f64 / (LAPS - 1) as f64;
            walk += drift.sample(&mut rng);
            let mut t = st.fresh_pace
                + gamma * fuel
                + st.wear * age
                + 0.0008 * age * age
                + st.warmup * (-age / 1.5).exp()
                + walk
                + noise.sample(&mut rng);
            if rng.random::<f64>() < 0.04 {
                t += slip.sample(&mut rng);
            }
            if lap == 1 {
                // standing start
                t += 2.5;
            }
            if lap == 43 {
                t += 3.5;
            }
            let pit_in = lap == st.last && lap != LAPS;
            let pit_out = lap == st.first && s > 0;
            if pit_in {
                t += 17.0;
            }
            if pit_out {
                t += 4.0;
            }
            writeln!(
                csv,
                "{lap},{t:.3},{},{},{},{},{fuel}",
                st.compound,
                s + 1,
                u8::from(pit_in),
                u8::from(pit_out)
            )
            .unwrap();
        }
    }
    std::fs::write(&out, csv).unwrap_or_else(|e| panic!("{out}: {e}"));
}
