//! Race data: lap records, stints, pit indicators and the fuel covariate.
//!
//! The canonical on-disk form is a CSV with the header
//! `lap,time_s,compound,stint,pit_in,pit_out,fuel_kg`. Rows flagged as pit-in
//! or pit-out laps are dropped on load; the model never sees them.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "lap", "time_s", "compound", "stint", "pit_in", "pit_out", "fuel_kg",
];

/// Maximum fuel load allowed at the start of a race, kg.
pub const MAX_FUEL_KG: f64 = 110.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Compound {
    Hard = 1,
    Medium = 2,
    Soft = 3,
}

impl Compound {
    pub const ALL: [Compound; 3] = [Compound::Hard, Compound::Medium, Compound::Soft];

    /// Numeric code used by the models (HARD=1, MEDIUM=2, SOFT=3).
    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based index into per-compound parameter arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Compound::Hard),
            2 => Some(Compound::Medium),
            3 => Some(Compound::Soft),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Compound::Hard => "HARD",
            Compound::Medium => "MEDIUM",
            Compound::Soft => "SOFT",
        }
    }
}

impl fmt::Display for Compound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Compound {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_uppercase().as_str() {
            "HARD" | "H" => Ok(Compound::Hard),
            "MEDIUM" | "M" => Ok(Compound::Medium),
            "SOFT" | "S" => Ok(Compound::Soft),
            _ => match t.parse::<u8>().ok().and_then(Compound::from_code) {
                Some(c) => Ok(c),
                None => Err(format!("unknown compound {t:?}")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapRecord {
    /// Race lap number, 1-based.
    pub lap_number: u32,
    pub lap_time_s: f64,
    pub compound: Compound,
    /// 1-based stint counter.
    pub stint_index: u32,
    pub fuel_kg: f64,
}

impl LapRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.lap_number == 0 {
            return Err("lap number must be positive".into());
        }
        if !(self.lap_time_s.is_finite() && self.lap_time_s > 0.0) {
            return Err(format!("lap time must be positive, got {}", self.lap_time_s));
        }
        if !(0.0..=MAX_FUEL_KG).contains(&self.fuel_kg) {
            return Err(format!("fuel {} kg outside [0, {MAX_FUEL_KG}]", self.fuel_kg));
        }
        if self.stint_index == 0 {
            return Err("stint index must be positive".into());
        }
        Ok(())
    }
}

/// Linear fuel burn from `start_kg` on lap 1 down to zero on the last lap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelProfile {
    pub start_kg: f64,
    pub total_race_laps: u32,
}

impl FuelProfile {
    pub fn new(start_kg: f64, total_race_laps: u32) -> Result<Self> {
        if !(start_kg > 0.0 && start_kg.is_finite()) {
            return Err(Error::domain(format!("start fuel must be positive, got {start_kg}")));
        }
        if total_race_laps < 2 {
            return Err(Error::domain("a race needs at least two laps for a fuel profile"));
        }
        Ok(FuelProfile {
            start_kg,
            total_race_laps,
        })
    }

    /// Fuel on board for race lap `lap`.
    pub fn fuel_at(&self, lap: u32) -> Result<f64> {
        fuel_at(self, lap)
    }

    /// Fuel burnt per lap.
    pub fn burn_per_lap(&self) -> f64 {
        self.start_kg / (self.total_race_laps - 1) as f64
    }
}

impl Default for FuelProfile {
    fn default() -> Self {
        FuelProfile {
            start_kg: MAX_FUEL_KG,
            total_race_laps: 70,
        }
    }
}

pub fn fuel_at(profile: &FuelProfile, lap: u32) -> Result<f64> {
    let n = profile.total_race_laps;
    if lap < 1 || lap > n {
        return Err(Error::domain(format!("lap {lap} outside 1..={n}")));
    }
    if lap == n {
        return Ok(0.0);
    }
    Ok(profile.start_kg * (n - lap) as f64 / (n - 1) as f64)
}

/// One contiguous stint, as 1-based inclusive lap positions in the cleaned series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StintSlice {
    pub start: usize,
    pub end: usize,
    pub compound: Compound,
}

impl StintSlice {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A validated, cleaned lap series for one driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceSeries {
    laps: Vec<LapRecord>,
    /// `pit_after[t]`: the lap at position t+1 is driven on a fresh set.
    pit_after: Vec<bool>,
    /// 1-based position of the last lap of every stint.
    stint_ends: Vec<usize>,
    total_race_laps: u32,
}

impl RaceSeries {
    pub fn new(laps: Vec<LapRecord>, total_race_laps: u32) -> Result<Self> {
        if laps.is_empty() {
            return Err(Error::domain("race series is empty"));
        }
        for (i, lap) in laps.iter().enumerate() {
            lap.validate()
                .map_err(|m| Error::domain(format!("lap position {}: {m}", i + 1)))?;
            if lap.lap_number > total_race_laps {
                return Err(Error::domain(format!(
                    "lap {} beyond race length {total_race_laps}",
                    lap.lap_number
                )));
            }
        }
        for (i, w) in laps.windows(2).enumerate() {
            if w[1].lap_number <= w[0].lap_number {
                return Err(Error::domain(format!(
                    "lap numbers not increasing at position {}",
                    i + 2
                )));
            }
            if w[1].stint_index < w[0].stint_index {
                return Err(Error::domain(format!(
                    "stint index decreases at position {}",
                    i + 2
                )));
            }
            if w[1].stint_index == w[0].stint_index && w[1].compound != w[0].compound {
                return Err(Error::domain(format!(
                    "compound changes within stint {} at position {}",
                    w[0].stint_index,
                    i + 2
                )));
            }
        }
        let (pit_after, stint_ends) = derive_structure(&laps);
        Ok(RaceSeries {
            laps,
            pit_after,
            stint_ends,
            total_race_laps,
        })
    }

    pub fn len(&self) -> usize {
        self.laps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laps.is_empty()
    }

    pub fn laps(&self) -> &[LapRecord] {
        &self.laps
    }

    pub fn lap(&self, pos: usize) -> &LapRecord {
        &self.laps[pos]
    }

    pub fn pit_after(&self) -> &[bool] {
        &self.pit_after
    }

    pub fn stint_ends(&self) -> &[usize] {
        &self.stint_ends
    }

    pub fn total_race_laps(&self) -> u32 {
        self.total_race_laps
    }

    pub fn times(&self) -> Vec<f64> {
        self.laps.iter().map(|l| l.lap_time_s).collect()
    }

    pub fn fuel(&self) -> Vec<f64> {
        self.laps.iter().map(|l| l.fuel_kg).collect()
    }

    pub fn compounds(&self) -> Vec<Compound> {
        self.laps.iter().map(|l| l.compound).collect()
    }

    /// True when position `t` (0-based) starts on fresh tires, i.e. the race
    /// start or the lap after a pit stop.
    pub fn starts_stint(&self, t: usize) -> bool {
        t == 0 || self.pit_after[t - 1]
    }

    /// First `n` laps. The pit indicator of the last kept lap is cleared,
    /// since its successor is not part of the prefix.
    pub fn prefix(&self, n: usize) -> Result<RaceSeries> {
        if n == 0 || n > self.len() {
            return Err(Error::domain(format!(
                "prefix length {n} outside 1..={}",
                self.len()
            )));
        }
        RaceSeries::new(self.laps[..n].to_vec(), self.total_race_laps)
    }

    /// Append one lap, validating ordering against the current tail.
    pub fn push(&mut self, lap: LapRecord) -> Result<()> {
        let mut laps = self.laps.clone();
        laps.push(lap);
        *self = RaceSeries::new(laps, self.total_race_laps)?;
        Ok(())
    }

    pub fn stint_slices(&self) -> Vec<StintSlice> {
        stint_slices(self)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let to_err = |e: csv::Error| Error::Config(format!("csv write: {e}"));
        wtr.write_record(CSV_HEADER).map_err(to_err)?;
        for lap in &self.laps {
            wtr.write_record([
                lap.lap_number.to_string(),
                format!("{:.3}", lap.lap_time_s),
                lap.compound.name().to_string(),
                lap.stint_index.to_string(),
                "0".into(),
                "0".into(),
                lap.fuel_kg.to_string(),
            ])
            .map_err(to_err)?;
        }
        wtr.flush()
            .map_err(|e| Error::Config(format!("csv flush: {e}")))?;
        Ok(())
    }

    /// Writes the canonical CSV. Only retained laps are written, so a reload
    /// reproduces this value when the final race lap is among them.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

fn derive_structure(laps: &[LapRecord]) -> (Vec<bool>, Vec<usize>) {
    let n = laps.len();
    let mut pit_after = vec![false; n];
    let mut stint_ends = Vec::new();
    for t in 0..n {
        let last = t + 1 == n;
        if !last && laps[t + 1].stint_index > laps[t].stint_index {
            pit_after[t] = true;
        }
        if last || pit_after[t] {
            stint_ends.push(t + 1);
        }
    }
    (pit_after, stint_ends)
}

pub fn stint_slices(series: &RaceSeries) -> Vec<StintSlice> {
    let mut start = 1;
    series
        .stint_ends
        .iter()
        .map(|&end| {
            let s = StintSlice {
                start,
                end,
                compound: series.laps[end - 1].compound,
            };
            start = end + 1;
            s
        })
        .collect()
}

pub fn load_race_csv(path: impl AsRef<Path>) -> Result<RaceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_race_csv(file, path)
}

/// Parses the canonical CSV from any reader; `origin` only labels errors.
pub fn read_race_csv<R: Read>(reader: R, origin: &Path) -> Result<RaceSeries> {
    let parse_err = |row: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        row,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(0, format!("header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(0, format!("missing column {name:?}")))
    };
    let idx = [
        col("lap")?,
        col("time_s")?,
        col("compound")?,
        col("stint")?,
        col("pit_in")?,
        col("pit_out")?,
        col("fuel_kg")?,
    ];

    let mut kept = Vec::new();
    let mut max_lap = 0u32;
    let mut last_lap = 0u32;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let lap: u32 = field(0)
            .parse()
            .map_err(|_| parse_err(row, format!("bad lap number {:?}", field(0))))?;
        if lap <= last_lap {
            return Err(parse_err(
                row,
                format!("lap {lap} does not follow lap {last_lap}"),
            ));
        }
        last_lap = lap;
        max_lap = max_lap.max(lap);
        let time: f64 = field(1)
            .parse()
            .map_err(|_| parse_err(row, format!("bad lap time {:?}", field(1))))?;
        let compound: Compound = field(2).parse().map_err(|m| parse_err(row, m))?;
        let stint: u32 = field(3)
            .parse()
            .map_err(|_| parse_err(row, format!("bad stint {:?}", field(3))))?;
        let flag = |k: usize| match field(k) {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(parse_err(row, format!("bad {} flag {other:?}", CSV_HEADER[k]))),
        };
        let pit_in = flag(4)?;
        let pit_out = flag(5)?;
        let fuel: f64 = field(6)
            .parse()
            .map_err(|_| parse_err(row, format!("bad fuel {:?}", field(6))))?;
        let record = LapRecord {
            lap_number: lap,
            lap_time_s: time,
            compound,
            stint_index: stint,
            fuel_kg: fuel,
        };
        record.validate().map_err(|m| parse_err(row, m))?;
        if !(pit_in || pit_out) {
            kept.push((row, record));
        }
    }
    if max_lap == 0 {
        return Err(parse_err(0, "no data rows".into()));
    }
    if kept.is_empty() {
        return Err(parse_err(0, "every row is a pit lap".into()));
    }
    for w in kept.windows(2) {
        if w[1].1.stint_index < w[0].1.stint_index {
            return Err(parse_err(w[1].0, "stint index decreases".into()));
        }
        if w[1].1.stint_index == w[0].1.stint_index && w[1].1.compound != w[0].1.compound {
            return Err(parse_err(w[1].0, "compound changes within a stint".into()));
        }
    }
    let laps = kept.into_iter().map(|(_, r)| r).collect();
    RaceSeries::new(laps, max_lap)
}
