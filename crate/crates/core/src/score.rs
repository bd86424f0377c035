//! RMSPE and CRPS, per stint and in total.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::distributions::std_normal_cdf;
use crate::error::{Error, Result};

/// Root mean squared error of `(y, ŷ)` pairs.
pub fn rmspe(predictions: &[(f64, f64)]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::domain("RMSPE of an empty stint"));
    }
    let ss: f64 = predictions.iter().map(|(y, p)| (y - p) * (y - p)).sum();
    Ok((ss / predictions.len() as f64).sqrt())
}

/// Energy-form sample CRPS `E|X − y| − ½E|X − X′|` over all ordered pairs
/// of draws, evaluated exactly in O(n log n) from the sorted sample.
pub fn crps_sample(draws: &[f64], y: f64) -> Result<f64> {
    let n = draws.len();
    if n < 2 {
        return Err(Error::domain("CRPS needs at least two draws"));
    }
    if draws.iter().any(|x| !x.is_finite()) || !y.is_finite() {
        return Err(Error::domain("CRPS of non-finite values"));
    }
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let nf = n as f64;
    let abs_y = s.iter().map(|x| (x - y).abs()).sum::<f64>() / nf;
    // Σ_{i,j} |x_i − x_j| = 2 Σ_i (2i − n + 1) x_(i); shifted by the minimum
    let lo = s[0];
    let pair: f64 = s
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - nf + 1.0) * (x - lo))
        .sum::<f64>()
        * 2.0
        / (nf * nf);
    Ok((abs_y - 0.5 * pair).max(0.0))
}

/// Closed-form CRPS of a normal predictive.
pub fn crps_gaussian(mean: f64, sd: f64, y: f64) -> f64 {
    if sd == 0.0 {
        return (y - mean).abs();
    }
    let z = (y - mean) / sd;
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    sd * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * pdf - 1.0 / std::f64::consts::PI.sqrt())
}

/// One scored one-step forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredForecast {
    pub method: String,
    pub stint: usize,
    pub y: f64,
    pub point: f64,
    pub crps: f64,
}

/// Per-stint RMSPE and CRPS for every method. Totals are recomputed from
/// the rows: RMSPE total is the sum over stints, CRPS total the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub methods: Vec<String>,
    pub stints: Vec<usize>,
    /// `rmspe[stint_row][method]`
    pub rmspe: Vec<Vec<f64>>,
    pub crps: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn rmspe_total(&self, method: usize) -> f64 {
        self.rmspe.iter().map(|r| r[method]).sum()
    }

    pub fn crps_mean(&self, method: usize) -> f64 {
        self.crps.iter().map(|r| r[method]).sum::<f64>() / self.crps.len() as f64
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }

    fn table_csv(&self, rows: &[Vec<f64>], total_label: &str, total: impl Fn(usize) -> f64) -> String {
        let mut s = String::from("stint");
        for m in &self.methods {
            let _ = write!(s, ",{m}");
        }
        s.push('\n');
        for (stint, row) in self.stints.iter().zip(rows) {
            let _ = write!(s, "{stint}");
            for v in row {
                let _ = write!(s, ",{v:.6}");
            }
            s.push('\n');
        }
        s.push_str(total_label);
        for m in 0..self.methods.len() {
            let _ = write!(s, ",{:.6}", total(m));
        }
        s.push('\n');
        s
    }

    pub fn rmspe_csv(&self) -> String {
        self.table_csv(&self.rmspe, "total", |m| self.rmspe_total(m))
    }

    pub fn crps_csv(&self) -> String {
        self.table_csv(&self.crps, "mean", |m| self.crps_mean(m))
    }

    fn table_text(&self, title: &str, rows: &[Vec<f64>], total_label: &str, total: impl Fn(usize) -> f64) -> String {
        let mut s = format!("{title}\n{:<8}", "");
        for m in &self.methods {
            let _ = write!(s, "{m:>12}");
        }
        s.push('\n');
        for (stint, row) in self.stints.iter().zip(rows) {
            let _ = write!(s, "{:<8}", format!("Stint {stint}"));
            for v in row {
                let _ = write!(s, "{v:>12.3}");
            }
            s.push('\n');
        }
        let _ = write!(s, "{total_label:<8}");
        for m in 0..self.methods.len() {
            let _ = write!(s, "{:>12.3}", total(m));
        }
        s.push('\n');
        s
    }

    pub fn pretty(&self) -> String {
        let mut s = self.table_text("RMSPE", &self.rmspe, "Total", |m| self.rmspe_total(m));
        s.push('\n');
        s.push_str(&self.table_text("CRPS", &self.crps, "Mean", |m| self.crps_mean(m)));
        s
    }
}

/// Builds the table from scored forecasts. Every method must have at least
/// one forecast in every listed stint.
pub fn score_table(records: &[ScoredForecast], methods: &[String], stints: &[usize]) -> Result<ScoreTable> {
    let mut groups: BTreeMap<(usize, &str), Vec<&ScoredForecast>> = BTreeMap::new();
    for r in records {
        groups.entry((r.stint, r.method.as_str())).or_default().push(r);
    }
    let mut rmspe_rows = Vec::new();
    let mut crps_rows = Vec::new();
    for &stint in stints {
        let mut rr = Vec::new();
        let mut cr = Vec::new();
        for m in methods {
            let g = groups
                .get(&(stint, m.as_str()))
                .ok_or_else(|| Error::domain(format!("no scored forecasts for {m} in stint {stint}")))?;
            let pairs: Vec<(f64, f64)> = g.iter().map(|r| (r.y, r.point)).collect();
            rr.push(rmspe(&pairs)?);
            cr.push(g.iter().map(|r| r.crps).sum::<f64>() / g.len() as f64);
        }
        rmspe_rows.push(rr);
        crps_rows.push(cr);
    }
    Ok(ScoreTable {
        methods: methods.to_vec(),
        stints: stints.to_vec(),
        rmspe: rmspe_rows,
        crps: crps_rows,
    })
}
