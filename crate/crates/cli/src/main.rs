use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use log::error;
use tearfilm::HaltReason;
use tearfilm_cli::{run, sweep, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "tearfilm", version, about = "Tear-film thinning and breakup simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Recorded in the manifest; the solvers are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every case of a sweep file and write summary.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Full versus reduced errors and timings (mode pod_error_study).
    PodCompare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a run configuration without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    let out = |cfg: &RunConfig| cli.out_dir.clone().unwrap_or_else(|| cfg.output.directory.clone());
    match &cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(config)?;
            let m = run(&cfg, &out(&cfg), cli.seed)?;
            if let Some(HaltReason::Failure(msg)) = &m.halted {
                error!("solver failure: {msg}");
                return Ok(ExitCode::from(2));
            }
        }
        Command::PodCompare { config } => {
            let mut cfg = RunConfig::load(config)?;
            if cfg.mode != Mode::PodErrorStudy {
                log::warn!("pod-compare runs mode pod_error_study; config says {:?}", cfg.mode);
                cfg.mode = Mode::PodErrorStudy;
            }
            run(&cfg, &out(&cfg), cli.seed)?;
        }
        Command::Sweep { config } => {
            let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("sweep_out"));
            let rows = sweep(config, &dir, cli.threads, cli.seed)?;
            if rows.iter().any(|r| r.last().is_some_and(|s| s != "ok")) {
                return Ok(ExitCode::from(2));
            }
        }
        Command::ValidateConfig { config } => {
            let cfg = RunConfig::load(config)?;
            println!("{}: valid, mode {:?}", config.display(), cfg.mode);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
