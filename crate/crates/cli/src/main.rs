//! `z2lgt`: runs one experiment from a TOML document and writes CSV tables
//! plus a `meta.json` sidecar into the output directory.
//!
//! Exit codes: 0 success, 1 i/o failure, 2 configuration error, 3 physics or
//! convergence error.

mod config;
mod error;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Experiment, ExperimentConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "z2lgt", version, about = "Z2 lattice gauge theory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the document's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// RNG seed; overrides the document's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the document's `experiment` field.
    Run,
    /// Lowest levels with plaquette and vertex expectation values.
    Spectrum,
    /// Adiabatic growing of the toric-code state.
    Grow,
    /// Gap landscape of one growing step.
    Gapscan,
    /// Oscillator-model time evolution.
    MicroscopicEvolve,
    /// Projective measurements of a toric-code eigenstate.
    Snapshot,
    /// Ramsey fringes with and without a vison.
    Ramsey,
    /// Pulse-area scan of the Ramsey sequence.
    RamseyCalibrate,
    /// Gap of the six-state reduced model.
    ReducedGap,
    /// Fine-tuned coupler parameters of the triangle.
    Finetune,
}

impl Command {
    fn experiment(&self) -> Option<Experiment> {
        Some(match self {
            Command::Run => return None,
            Command::Spectrum => Experiment::Spectrum,
            Command::Grow => Experiment::Grow,
            Command::Gapscan => Experiment::Gapscan,
            Command::MicroscopicEvolve => Experiment::MicroscopicEvolve,
            Command::Snapshot => Experiment::Snapshot,
            Command::Ramsey => Experiment::Ramsey,
            Command::RamseyCalibrate => Experiment::RamseyCalibrate,
            Command::ReducedGap => Experiment::ReducedGap,
            Command::Finetune => Experiment::Finetune,
        })
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::schema("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    }
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)?,
        None if matches!(cli.command, Command::Run) => {
            return Err(CliError::schema("--config", "`run` needs a configuration document"))
        }
        None => String::new(),
    };
    let cfg = ExperimentConfig::parse(&text, cli.command.experiment())?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let dir = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    let outputs = experiments::run(&cfg, seed)?;
    for p in output::write_all(&dir, &cfg, seed, &outputs)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("z2lgt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
