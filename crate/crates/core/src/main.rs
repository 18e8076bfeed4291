use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;

use otfs_isac::error::IsacError;
use otfs_isac::experiment::{emit_csv, emit_plot_script, run_experiment, write_csv, ExperimentConfig, ExperimentKind};

/// Run an OTFS ISAC experiment and write the result table as CSV.
///
/// Exit codes: 0 success, 1 runtime failure, 2 configuration error,
/// 3 infeasible beamforming target. ISAC_THREADS caps the worker count.
#[derive(Debug, Parser)]
#[command(name = "isac", version)]
struct Cli {
    /// estimate | prob-sweep | mse-sweep | beamform | rate-sweep | convergence
    #[arg(value_parser = parse_kind)]
    kind: ExperimentKind,
    /// Flat JSON config; missing fields take the reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot script path (needs --out).
    #[arg(long)]
    plot: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    s.parse().map_err(|e: IsacError| e.to_string())
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("ISAC_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("ISAC_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        error!("{e}");
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let config = match &cli.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    };
    let mut config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(t) = cli.trials {
        config.trials = t;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if cli.plot.is_some() && cli.out.is_none() {
        eprintln!("error: --plot needs --out so the script has a CSV to read");
        return ExitCode::from(2);
    }
    if let Err(e) = config.resolve() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let table = match run_experiment(&config, Some(cli.kind)) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                IsacError::Infeasible(_) => ExitCode::from(3),
                IsacError::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            };
        }
    };
    let written = match &cli.out {
        Some(p) => emit_csv(&table, p).and_then(|_| match &cli.plot {
            Some(plot) => emit_plot_script(&table, p, plot),
            None => Ok(()),
        }),
        None => write_csv(&table, io::stdout().lock()),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
