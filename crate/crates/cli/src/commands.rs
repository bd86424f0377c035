use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stintlab::arima::{arima_forecast, arima_loglik, fit_arima, ArimaParams};
use stintlab::crossval::{run_cv, score_cv, CvConfig, CvOutput, Method};
use stintlab::data::load_race_csv;
use stintlab::distributions::std_normal_quantile;
use stintlab::forecast::{
    fitted_bands, forecast_next, rate_bands, write_bands, Interval, NextLap, PointKind, DEFAULT_PROBS,
};
use stintlab::hmc::{sample, Diagnostics, PosteriorDraws, SamplerConfig};
use stintlab::{Compound, ModelKind, PriorSpec, RaceSeries};

use crate::error::{CliError, CliResult};
use crate::manifest::{unix_now, RunManifest};
use crate::{CvArgs, FitArgs, ForecastArgs, ReportArgs, RerunArgs, RunArgs, ServeArgs};

/// Fits above this R-hat are reported as failures.
pub const RHAT_LIMIT: f64 = 1.05;

/// Priors for a run: `given` (from a manifest) wins over the override file.
fn load_priors(path: &Option<PathBuf>, given: Option<PriorSpec>) -> CliResult<PriorSpec> {
    let priors = match (given, path) {
        (Some(p), _) => p,
        (None, Some(p)) => PriorSpec::load(p)?,
        (None, None) => PriorSpec::default(),
    };
    priors.validate()?;
    Ok(priors)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn make_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

fn manifest(command: &str, run: &RunArgs, models: &[Method], out: &Path, priors: &PriorSpec) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        input: absolute(&run.input),
        models: models.iter().map(|m| m.name().to_string()).collect(),
        profile: run.profile,
        seed: run.seed,
        out: absolute(out),
        sampler: SamplerConfig::profile(run.profile, run.seed),
        priors_path: run.priors.as_deref().map(absolute),
        priors: priors.clone(),
        through_lap: None,
        pit: None,
        started_unix: unix_now(),
        finished_unix: 0,
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn finish(mut m: RunManifest, dir: &Path) -> CliResult<()> {
    m.finished_unix = unix_now();
    m.write(dir).map_err(|e| CliError::io(&dir.join(crate::manifest::MANIFEST_FILE), e))
}

fn check_convergence(diag: &Diagnostics) -> CliResult<()> {
    let r = diag.max_rhat();
    if r.is_nan() || r >= RHAT_LIMIT {
        return Err(CliError::nonconvergence(format!(
            "max R-hat {r:.4} is not below {RHAT_LIMIT}"
        )));
    }
    Ok(())
}

fn print_statics(draws: &PosteriorDraws, diag: &Diagnostics) {
    println!(
        "{:<20}{:>10}{:>10}{:>10}{:>10}{:>8}{:>9}",
        "quantity", "mean", "sd", "2.5%", "97.5%", "rhat", "ess"
    );
    for name in &draws.names()[..draws.n_static()] {
        if let Some(q) = diag.get(name) {
            println!(
                "{:<20}{:>10.4}{:>10.4}{:>10.4}{:>10.4}{:>8.3}{:>9.0}",
                q.name, q.mean, q.sd, q.q2_5, q.q97_5, q.rhat, q.ess_bulk
            );
        }
    }
    println!(
        "max rhat {:.4}, min bulk ess {:.0}, divergences {}/{}",
        diag.max_rhat(),
        diag.min_ess_bulk(),
        diag.divergences,
        diag.total_draws
    );
}

#[derive(Serialize)]
struct ArimaFit {
    params: ArimaParams,
    loglik: f64,
    n: usize,
}

pub fn fit(a: &FitArgs, given: Option<PriorSpec>) -> CliResult<()> {
    let series = load_race_csv(&a.run.input)?;
    let priors = load_priors(&a.run.priors, given)?;
    make_dir(&a.out)?;
    let m = manifest("fit", &a.run, &[a.model], &a.out, &priors);
    let kind = match a.model {
        Method::Arima => {
            let y = series.times();
            let params = fit_arima(&y)?;
            let out = ArimaFit { params, loglik: arima_loglik(&params, &y)?, n: y.len() };
            let text = serde_json::to_string_pretty(&out).expect("arima fit serializes");
            write_text(&a.out.join("arima.json"), &format!("{text}\n"))?;
            println!("{text}");
            return finish(m, &a.out);
        }
        Method::Ssm(kind) => kind,
    };
    let draws = sample(kind, &priors, &series, &SamplerConfig::profile(a.run.profile, a.run.seed))?;
    let diag = draws.diagnostics()?;
    draws.write_csv(create(&a.out.join("draws.csv"))?)?;
    diag.write_csv(create(&a.out.join("diagnostics.csv"))?)?;
    write_bands(&fitted_bands(&draws), create(&a.out.join("bands.csv"))?)?;
    if kind == ModelKind::TimeVarying {
        write_bands(&rate_bands(&draws), create(&a.out.join("nu_track.csv"))?)?;
    }
    finish(m, &a.out)?;
    print_statics(&draws, &diag);
    if diag.divergence_flag {
        log::warn!("more than 10% of transitions diverged");
    }
    check_convergence(&diag)
}

#[derive(Debug, Serialize)]
struct ForecastReport {
    model: String,
    trained_on: usize,
    through_lap: u32,
    target_lap: u32,
    compound: Compound,
    fresh_tires: bool,
    fuel_kg: f64,
    point: f64,
    point_kind: PointKind,
    intervals: Vec<Interval>,
    /// Recorded time of the target lap, when the input has it.
    observed: Option<f64>,
    max_rhat: Option<f64>,
}

fn truncate(full: &RaceSeries, through: Option<u32>) -> CliResult<RaceSeries> {
    let Some(lap) = through else {
        return Ok(full.clone());
    };
    let n = full.laps().iter().take_while(|r| r.lap_number <= lap).count();
    if n == 0 {
        return Err(CliError::usage(format!("no modelled laps at or before lap {lap}")));
    }
    Ok(full.prefix(n)?)
}

fn gaussian_intervals(mean: f64, sd: f64) -> Vec<Interval> {
    DEFAULT_PROBS
        .iter()
        .map(|&prob| {
            let z = std_normal_quantile(0.5 + prob / 2.0);
            Interval { prob, lower: mean - z * sd, upper: mean + z * sd }
        })
        .collect()
}

pub fn forecast(a: &ForecastArgs, given: Option<PriorSpec>) -> CliResult<()> {
    let full = load_race_csv(&a.run.input)?;
    let priors = load_priors(&a.run.priors, given)?;
    let series = truncate(&full, a.through)?;
    let mut next = NextLap::after(&series, a.pit);
    if next.lap_number > series.total_race_laps() {
        return Err(CliError::usage(format!(
            "lap {} is past the end of a {}-lap race",
            next.lap_number,
            series.total_race_laps()
        )));
    }
    let observed = full.laps().iter().find(|r| r.lap_number == next.lap_number);
    if let Some(r) = observed {
        next.fuel_kg = r.fuel_kg;
    }
    let last = series.lap(series.len() - 1).lap_number;
    if let Some(dir) = &a.out {
        make_dir(dir)?;
    }
    let mut m = manifest("forecast", &a.run, &[a.model], a.out.as_deref().unwrap_or(Path::new("")), &priors);
    m.through_lap = Some(last);
    m.pit = a.pit.map(|c| c.name().to_string());

    let (point, point_kind, intervals, max_rhat, diag) = match a.model {
        Method::Arima => {
            if a.pit.is_some() {
                return Err(CliError::usage("arima cannot model a pit stop"));
            }
            let y = series.times();
            let (mean, sd) = arima_forecast(&fit_arima(&y)?, &y)?;
            (mean, PointKind::Mean, gaussian_intervals(mean, sd), None, None)
        }
        Method::Ssm(kind) => {
            let draws = sample(kind, &priors, &series, &SamplerConfig::profile(a.run.profile, a.run.seed))?;
            let diag = draws.diagnostics()?;
            let f = forecast_next(&draws, &next, a.run.seed)?;
            (f.point, f.point_kind, f.intervals, Some(diag.max_rhat()), Some(diag))
        }
    };
    let report = ForecastReport {
        model: a.model.name().to_string(),
        trained_on: series.len(),
        through_lap: last,
        target_lap: next.lap_number,
        compound: next.compound,
        fresh_tires: next.fresh_tires,
        fuel_kg: next.fuel_kg,
        point,
        point_kind,
        intervals,
        observed: observed.map(|r| r.lap_time_s),
        max_rhat,
    };
    let json = serde_json::to_string_pretty(&report).expect("forecast serializes");
    if let Some(dir) = &a.out {
        write_text(&dir.join("forecast.json"), &format!("{json}\n"))?;
        finish(m, dir)?;
    }
    if a.json {
        println!("{json}");
    } else {
        print_forecast(&report);
    }
    match diag {
        Some(d) => check_convergence(&d),
        None => Ok(()),
    }
}

fn print_forecast(r: &ForecastReport) {
    println!("model       {}", r.model);
    println!("trained on  {} laps through lap {}", r.trained_on, r.through_lap);
    let tires = if r.fresh_tires { "fresh" } else { "same" };
    println!(
        "lap {:<7} {} ({tires} tires), fuel {:.1} kg",
        r.target_lap, r.compound, r.fuel_kg
    );
    let kind = match r.point_kind {
        PointKind::Mean => "mean",
        PointKind::Median => "median",
    };
    println!("point       {:.3} ({kind})", r.point);
    for p in [0.5, 0.9, 0.99] {
        if let Some(i) = r.intervals.iter().find(|i| (i.prob - p).abs() < 1e-12) {
            println!("{:<11} [{:.3}, {:.3}]", format!("{:.0}%", p * 100.0), i.lower, i.upper);
        }
    }
    if let Some(y) = r.observed {
        println!("observed    {y:.3}");
    }
}

fn print_tables(out: &CvOutput) -> CliResult<()> {
    let table = score_cv(out)?;
    print!("{}", table.pretty());
    for f in &out.failures {
        println!("excluded {} stint {} fold {}: {}", f.method, f.stint, f.fold, f.reason);
    }
    Ok(())
}

pub fn cv(a: &CvArgs, given: Option<PriorSpec>) -> CliResult<()> {
    let series = load_race_csv(&a.run.input)?;
    let priors = load_priors(&a.run.priors, given)?;
    let mut methods: Vec<Method> = Vec::new();
    for m in &a.model {
        if !methods.contains(m) {
            methods.push(*m);
        }
    }
    if methods.is_empty() {
        methods = Method::ALL.to_vec();
    }
    make_dir(&a.out)?;
    let m = manifest("cv", &a.run, &methods, &a.out, &priors);
    let cfg = CvConfig {
        sampler: SamplerConfig::profile(a.run.profile, a.run.seed),
        priors,
        rhat_limit: RHAT_LIMIT,
    };
    let out = run_cv(&series, &methods, &cfg)?;
    out.write_dir(&a.out)?;
    let table = score_cv(&out);
    if let Ok(t) = &table {
        write_text(&a.out.join("rmspe.csv"), &t.rmspe_csv())?;
        write_text(&a.out.join("crps.csv"), &t.crps_csv())?;
    }
    finish(m, &a.out)?;
    print_tables(&out)?;
    if !out.failures.is_empty() {
        return Err(CliError::nonconvergence(format!(
            "{} of {} folds excluded",
            out.failures.len(),
            out.failures.len() + out.results.len()
        )));
    }
    Ok(())
}

/// Repeats a run from its manifest, using the recorded priors rather than
/// the override file.
pub fn rerun(a: &RerunArgs) -> CliResult<()> {
    let m = RunManifest::read(&a.manifest).map_err(CliError::usage)?;
    let run = RunArgs {
        input: m.input.clone(),
        profile: m.profile,
        seed: m.seed,
        priors: m.priors_path.clone(),
    };
    let out = a.out.clone().unwrap_or_else(|| m.out.clone());
    let models = m
        .models
        .iter()
        .map(|s| s.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    let single = || {
        models
            .first()
            .copied()
            .filter(|_| models.len() == 1)
            .ok_or_else(|| CliError::usage(format!("{} needs exactly one model", m.command)))
    };
    match m.command.as_str() {
        "fit" => fit(&FitArgs { model: single()?, run, out }, Some(m.priors)),
        "cv" => cv(&CvArgs { model: models, run, out }, Some(m.priors)),
        "forecast" => {
            let pit = m
                .pit
                .as_deref()
                .map(|p| p.parse::<Compound>().map_err(CliError::usage))
                .transpose()?;
            let out = Some(out).filter(|o| !o.as_os_str().is_empty());
            let args = ForecastArgs { model: single()?, run, through: m.through_lap, pit, out, json: false };
            forecast(&args, Some(m.priors))
        }
        other => Err(CliError::usage(format!("unknown command {other:?} in manifest"))),
    }
}

pub fn report(a: &ReportArgs) -> CliResult<()> {
    print_tables(&CvOutput::read_dir(&a.input)?)
}

pub fn serve(a: &ServeArgs) -> CliResult<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::usage(e.to_string()))?;
    rt.block_on(async {
        let hub = match &a.data_dir {
            Some(dir) => stintlab_service::Hub::open(dir).map_err(CliError::usage)?,
            None => stintlab_service::Hub::in_memory(),
        };
        log::info!("listening on {}", a.addr);
        stintlab_service::serve(&a.addr, hub)
            .await
            .map_err(|e| CliError::usage(format!("{}: {e}", a.addr)))
    })
}
