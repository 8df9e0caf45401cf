//! `pluvio`: post-process ensemble rainfall forecasts from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pluvio::pipeline::{self, PipelineConfig};
use pluvio::verification::ScoreReport;
use pluvio::Error;

#[derive(Parser, Debug)]
#[command(name = "pluvio", version, about = "Ensemble rainfall post-processing and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Method(s) to run, comma separated; overrides `methods`.
    #[arg(long, global = true, value_delimiter = ',')]
    method: Option<Vec<String>>,

    /// Master seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; overrides `jobs`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write a synthetic scenario (data.csv, truth.csv).
    Simulate,
    /// Fit models on all observed cases.
    Fit,
    /// Apply fitted models to the data.
    Predict,
    /// Cross-validate and score the configured methods.
    Verify,
    /// Rebuild summary.csv from saved reports.
    Report,
}

fn config_from(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = &cli.method {
        cfg.methods = m.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn print_reports(reports: &[ScoreReport]) {
    println!(
        "{:<14} {:>7} {:>9} {:>8} {:>7} {:>7} {:>7}",
        "method", "n", "CRPS", "CRPSS", "E(Z)", "V(Z)", "Ω"
    );
    for r in reports {
        let crpss = r.crpss.map(|v| format!("{:.1}%", 100.0 * v)).unwrap_or_else(|| "-".into());
        println!(
            "{:<14} {:>7} {:>9.4} {:>8} {:>7.3} {:>7.3} {:>7.4}",
            r.method, r.n_cases, r.mean_crps, crpss, r.ez, r.vz, r.omega
        );
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = config_from(cli)?;
    let command = cli.command;
    pluvio::par::with_jobs(cfg.jobs, move || -> Result<(), Error> {
        match command {
            Command::Simulate => {
                let p = pipeline::run_simulate(&cfg)?;
                println!("wrote {}", p.display());
            }
            Command::Fit => {
                for p in pipeline::run_fit(&cfg)? {
                    println!("wrote {}", p.display());
                }
            }
            Command::Predict => {
                for p in pipeline::run_predict(&cfg)? {
                    println!("wrote {}", p.display());
                }
            }
            Command::Verify => print_reports(&pipeline::run_verify(&cfg)?),
            Command::Report => print_reports(&pipeline::run_report(&cfg)?),
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(2)
        }
    }
}
