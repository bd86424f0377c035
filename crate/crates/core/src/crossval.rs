//! Rolling-origin cross-validation with refits at every fold.
//!
//! For stint `i` ending at cumulative position `S_i` the cut is
//! `c_i = ⌈¾·S_i⌉`; fold `k` trains on positions `1..=c_i + k − 1` and
//! forecasts position `c_i + k`, for `k = 1..=S_i − c_i`.

use std::fmt;
use std::path::Path as FsPath;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arima::{arima_forecast, fit_arima};
use crate::data::RaceSeries;
use crate::error::{Error, Result};
use crate::forecast::{one_step_forecast, PointKind};
use crate::hmc::{sample, SamplerConfig};
use crate::model::{ModelKind, PriorSpec};
use crate::score::{crps_gaussian, crps_sample, score_table, ScoreTable, ScoredForecast};

/// A forecasting method scored by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ssm(ModelKind),
    Arima,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ssm(ModelKind::Base),
        Method::Ssm(ModelKind::Compound),
        Method::Ssm(ModelKind::TimeVarying),
        Method::Ssm(ModelKind::SkewT),
        Method::Arima,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ssm(k) => k.name(),
            Method::Arima => "arima",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("arima") {
            return Ok(Method::Arima);
        }
        s.parse::<ModelKind>().map(Method::Ssm).map_err(Error::Config)
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    /// 1-based stint number.
    pub stint: usize,
    /// 1-based fold number within the stint.
    pub fold: usize,
    /// Training positions are `1..=train_end`.
    pub train_end: usize,
    /// 1-based test position.
    pub test: usize,
}

/// `⌈¾·s⌉` in integer arithmetic.
pub fn cutoff(s: usize) -> usize {
    (3 * s + 3) / 4
}

/// Folds for stints ending at the given cumulative positions.
pub fn plan_for_ends(stint_ends: &[usize]) -> Vec<FoldPlan> {
    let mut plan = Vec::new();
    for (i, &s) in stint_ends.iter().enumerate() {
        let c = cutoff(s);
        if s == c {
            log::warn!("stint {} (ending at position {s}) yields no folds", i + 1);
        }
        for k in 1..=(s - c) {
            plan.push(FoldPlan {
                stint: i + 1,
                fold: k,
                train_end: c + k - 1,
                test: c + k,
            });
        }
    }
    plan
}

pub fn plan_folds(series: &RaceSeries) -> Vec<FoldPlan> {
    plan_for_ends(series.stint_ends())
}

#[derive(Debug, Clone)]
pub struct CvConfig {
    pub sampler: SamplerConfig,
    pub priors: PriorSpec,
    /// A fold whose fit reaches this R-hat is excluded.
    pub rhat_limit: f64,
}

impl CvConfig {
    pub fn new(sampler: SamplerConfig) -> Self {
        CvConfig {
            sampler,
            priors: PriorSpec::default(),
            rhat_limit: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub method: Method,
    pub stint: usize,
    pub fold: usize,
    pub test: usize,
    pub lap_number: u32,
    pub y: f64,
    pub point: f64,
    pub point_kind: PointKind,
    pub crps: f64,
    /// Predictive mean and sd (ARIMA only).
    pub gaussian: Option<(f64, f64)>,
    pub max_rhat: Option<f64>,
    pub divergences: usize,
    #[serde(skip)]
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub method: Method,
    pub stint: usize,
    pub fold: usize,
    pub reason: String,
}

/// Fold results file inside a cross-validation output directory.
pub const FOLDS_FILE: &str = "folds.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutput {
    pub methods: Vec<Method>,
    pub plan: Vec<FoldPlan>,
    pub results: Vec<FoldResult>,
    pub failures: Vec<FoldFailure>,
}

impl CvOutput {
    /// Stints that have at least one planned fold.
    pub fn stints(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.plan.iter().map(|f| f.stint).collect();
        s.dedup();
        s
    }

    /// Writes `folds.json` plus one CSV of predictive draws per fold.
    pub fn write_dir(&self, dir: impl AsRef<FsPath>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = dir.join(FOLDS_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Fit(e.to_string()))?;
        std::fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
        for r in &self.results {
            let path = dir.join(format!("{}_stint{}_fold{:02}.csv", r.method, r.stint, r.fold));
            let mut s = String::new();
            match r.gaussian {
                Some((m, sd)) => s.push_str(&format!("mean,sd\n{m},{sd}\n")),
                None => {
                    s.push_str("draw\n");
                    for d in &r.draws {
                        s.push_str(&format!("{d}\n"));
                    }
                }
            }
            std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<FsPath>) -> Result<Self> {
        let path = dir.as_ref().join(FOLDS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn fold_seed(base: u64, fold: &FoldPlan, method: Method) -> u64 {
    let m = Method::ALL.iter().position(|x| *x == method).unwrap_or(0) as u64;
    base.wrapping_add(fold.test as u64 * 16 + m)
}

fn run_fold(series: &RaceSeries, fold: &FoldPlan, method: Method, cfg: &CvConfig) -> Result<FoldResult> {
    let train = series.prefix(fold.train_end)?;
    let lap = series.lap(fold.test - 1);
    let y = lap.lap_time_s;
    let seed = fold_seed(cfg.sampler.seed, fold, method);
    let base = |point, point_kind, crps| FoldResult {
        method,
        stint: fold.stint,
        fold: fold.fold,
        test: fold.test,
        lap_number: lap.lap_number,
        y,
        point,
        point_kind,
        crps,
        gaussian: None,
        max_rhat: None,
        divergences: 0,
        draws: Vec::new(),
    };
    match method {
        Method::Arima => {
            let times = train.times();
            let p = fit_arima(&times)?;
            let (m, sd) = arima_forecast(&p, &times)?;
            Ok(FoldResult {
                gaussian: Some((m, sd)),
                ..base(m, PointKind::Mean, crps_gaussian(m, sd, y))
            })
        }
        Method::Ssm(kind) => {
            let sampler = SamplerConfig { seed, ..cfg.sampler.clone() };
            let draws = sample(kind, &cfg.priors, &train, &sampler)?;
            let max_rhat = draws.diagnostics().ok().map(|d| d.max_rhat());
            if let Some(r) = max_rhat {
                if r >= cfg.rhat_limit {
                    return Err(Error::Fit(format!("max R-hat {r:.3} ≥ {}", cfg.rhat_limit)));
                }
            }
            let f = one_step_forecast(&draws, series, fold.test, seed)?;
            let crps = crps_sample(&f.draws, y)?;
            Ok(FoldResult {
                max_rhat,
                divergences: draws.divergences(),
                draws: f.draws,
                ..base(f.point, f.point_kind, crps)
            })
        }
    }
}

/// Refits every method on every fold's training window and forecasts its
/// test lap. Folds run in parallel; results are sorted by (stint, fold,
/// method). Failed folds are reported, not fatal.
pub fn run_cv(series: &RaceSeries, methods: &[Method], cfg: &CvConfig) -> Result<CvOutput> {
    let plan = plan_folds(series);
    if plan.is_empty() {
        return Err(Error::domain("no cross-validation folds for this series"));
    }
    if methods.is_empty() {
        return Err(Error::domain("no methods to cross-validate"));
    }
    let jobs: Vec<(FoldPlan, Method)> = plan
        .iter()
        .flat_map(|f| methods.iter().map(move |m| (*f, *m)))
        .collect();
    let outcomes: Vec<(FoldPlan, Method, Result<FoldResult>)> = jobs
        .into_par_iter()
        .map(|(f, m)| {
            let r = run_fold(series, &f, m, cfg);
            (f, m, r)
        })
        .collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (f, m, r) in outcomes {
        match r {
            Ok(r) => results.push(r),
            Err(e) => {
                log::warn!("{m} fold {}/{} failed: {e}", f.stint, f.fold);
                failures.push(FoldFailure {
                    method: m,
                    stint: f.stint,
                    fold: f.fold,
                    reason: e.to_string(),
                });
            }
        }
    }
    results.sort_by_key(|r| (r.stint, r.fold, r.method));
    failures.sort_by_key(|r| (r.stint, r.fold, r.method));
    Ok(CvOutput {
        methods: methods.to_vec(),
        plan,
        results,
        failures,
    })
}

/// RMSPE and CRPS tables from a cross-validation run.
pub fn score_cv(output: &CvOutput) -> Result<ScoreTable> {
    let records: Vec<ScoredForecast> = output
        .results
        .iter()
        .map(|r| ScoredForecast {
            method: r.method.name().to_string(),
            stint: r.stint,
            y: r.y,
            point: r.point,
            crps: r.crps,
        })
        .collect();
    let methods: Vec<String> = output.methods.iter().map(|m| m.name().to_string()).collect();
    score_table(&records, &methods, &output.stints())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let p = plan_for_ends(&[13]);
        assert_eq!(p.iter().map(|f| f.test).collect::<Vec<_>>(), vec![11, 12, 13]);
        assert_eq!(p[0].train_end, 10);
        let p = plan_for_ends(&[4]);
        assert_eq!(p, vec![FoldPlan { stint: 1, fold: 1, train_end: 3, test: 4 }]);
        assert!(plan_for_ends(&[1]).is_empty());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("garch".parse::<Method>().is_err());
    }
}
