mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stintlab::crossval::Method;
use stintlab::hmc::Profile;

use crate::error::{CliError, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "stintlab", version, about = "Bayesian tire degradation models for race lap times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model and write draws, diagnostics and per-lap bands.
    Fit(FitArgs),
    /// Forecast the lap after the (optionally truncated) input.
    Forecast(ForecastArgs),
    /// Rolling-origin cross-validation; writes fold results and score tables.
    Cv(CvArgs),
    /// Repeat a run from the manifest in its output directory.
    Rerun(RerunArgs),
    /// Print the score tables of an existing cross-validation directory.
    Report(ReportArgs),
    /// Run the live strategy service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Race CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "desk")]
    pub profile: Profile,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML file overriding prior hyperparameters.
    #[arg(long)]
    pub priors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub model: Method,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub model: Method,
    #[command(flatten)]
    pub run: RunArgs,
    /// Train on race laps up to and including this lap.
    #[arg(long)]
    pub through: Option<u32>,
    /// Pit before the forecast lap and fit this compound.
    #[arg(long)]
    pub pit: Option<stintlab::Compound>,
    /// Also write `forecast.json` and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    /// Methods to compare (repeat or comma-separate); all five by default.
    #[arg(long, value_delimiter = ',')]
    pub model: Vec<Method>,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// Output directory holding `manifest.json`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write here instead of the recorded output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a previous `cv` run.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Directory of per-session event logs; sessions found there are restored.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("STINTLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::usage(format!("STINTLAB_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Fit(a) => commands::fit(a, None),
        Command::Forecast(a) => commands::forecast(a, None),
        Command::Cv(a) => commands::cv(a, None),
        Command::Rerun(a) => commands::rerun(a),
        Command::Report(a) => commands::report(a),
        Command::Serve(a) => commands::serve(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code as u8)
        }
    }
}
