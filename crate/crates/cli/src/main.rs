//! `blindfield`: runs the field, stability and sampling experiments and
//! writes plot-ready CSV/JSON tables.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "blindfield", version, about = "Exact autonomous-field experiments on toy data")]
struct Cli {
    /// TOML experiment file; missing sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, overriding `[sampler] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Exit successfully even when some trajectories diverged.
    #[arg(long, global = true)]
    allow_divergence: bool,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Marginal energy, gradient and correction over a 2D window.
    EnergyMap,
    /// Oracle-versus-autonomous drift error for every preset.
    StabilitySweep,
    /// Sample the embedded circles across dimensions, presets and modes.
    Circles,
    /// Posterior concentration by proximity and by dimension.
    Concentration,
    /// Field decomposition along a ray into a data point.
    Decompose,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        config.output.dir = out;
    }
    if let Some(seed) = cli.seed {
        config.sampler.seed = seed;
    }
    if cli.print_config {
        print!("{}", config.to_toml()?);
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let ctx = Context {
        config,
        allow_divergence: cli.allow_divergence,
    };
    match cli.command {
        Command::EnergyMap => commands::energy_map_cmd(&ctx),
        Command::StabilitySweep => commands::stability_cmd(&ctx),
        Command::Circles => commands::circles_cmd(&ctx),
        Command::Concentration => commands::concentration_cmd(&ctx),
        Command::Decompose => commands::decompose_cmd(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
