//! Command-line driver for the kinlab laboratory.
//!
//! A TOML config describes an experiment; subcommands run successive stages
//! of the pipeline, each reusing content-addressed artifacts left by earlier
//! invocations. Exit codes separate the failure classes: 2 for config and
//! input problems, 3 for runs that left the certified rectangle or went
//! non-finite, 4 for violated invariants.

mod config;
mod emit;
mod pipeline;

use clap::{Parser, Subcommand};
use pipeline::Stage;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kinlab", version, about = "Singular entropies, kinetic measures and decay checks")]
struct Cli {
    /// Experiment description (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Multiply every spatial resolution (grids, cut levels, 1/dx).
    #[arg(long = "resolution-scale", global = true, default_value_t = 1.0)]
    resolution_scale: f64,
    /// Jitter the datum shape reproducibly (background state untouched).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Measure the strict-hyperbolicity / genuine-nonlinearity certificate.
    Certify,
    /// Solve the singular entropy tables and certify the local constants.
    BuildEntropies,
    /// Integrate the viscosity ladder and store the snapshot records.
    Run,
    /// Battery pairings, dissipation measures, strip balance, characteristics.
    Analyze,
    /// Strip iteration, interaction functional, chained L4 bound, time modulus.
    Decay,
    /// Run every stage and write the summary.
    Report,
    /// Alias for report.
    All,
}

fn stage_of(cmd: Cmd) -> Stage {
    match cmd {
        Cmd::Certify => Stage::Certify,
        Cmd::BuildEntropies => Stage::Family,
        Cmd::Run => Stage::Run,
        Cmd::Analyze => Stage::Analyze,
        Cmd::Decay => Stage::Decay,
        Cmd::Report | Cmd::All => Stage::Report,
    }
}

fn drive(cli: &Cli) -> kinlab::Result<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| kinlab::Error::config("--config is required"))?;
    let mut cfg = config::ExperimentConfig::load(path)?;
    cfg.apply_scale(cli.resolution_scale)?;
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
        cfg.validate()?;
    }
    let config_dir = path.parent().unwrap_or(Path::new("."));
    pipeline::execute(&cfg, config_dir, &cli.out, stage_of(cli.cmd))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match drive(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
