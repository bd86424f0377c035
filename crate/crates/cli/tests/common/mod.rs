#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SNAPSHOT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/austria_2025_ham.csv");

pub fn stintlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stintlab"))
        .args(args)
        .env_remove("STINTLAB_THREADS")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two-stint race of `laps` laps: mediums to the stop at the halfway lap,
/// hards after. Wear is linear in tire age with a small fixed wobble.
pub fn write_race(dir: &Path, name: &str, laps: u32) -> PathBuf {
    let stop = laps / 2;
    let mut s = String::from("lap,time_s,compound,stint,pit_in,pit_out,fuel_kg\n");
    for lap in 1..=laps {
        let fuel = 110.0 * (laps - lap) as f64 / (laps - 1) as f64;
        let (compound, stint, age, base) = if lap <= stop {
            ("MEDIUM", 1, lap - 1, 69.0)
        } else {
            ("HARD", 2, lap - stop - 1, 69.3)
        };
        let mut y = base + 0.05 * age as f64 + 0.03 * fuel + 0.25 * (2.3 * lap as f64).sin();
        let pit_in = u8::from(lap == stop);
        let pit_out = u8::from(lap == stop + 1);
        if pit_in == 1 {
            y += 17.0;
        }
        if pit_out == 1 {
            y += 4.0;
        }
        s.push_str(&format!("{lap},{y:.3},{compound},{stint},{pit_in},{pit_out},{fuel}\n"));
    }
    let path = dir.join(name);
    std::fs::write(&path, s).unwrap();
    path
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

/// Column of a CSV parsed as numbers.
pub fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let j = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[j].parse().unwrap()).collect()
}
