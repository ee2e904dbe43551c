//! `fracwalk`: build, simulate and check lattice walks for distributed-order
//! space-fractional diffusion.
//!
//! Exit codes: 0 on success, 1 on a runtime or numerical failure, 2 on a
//! validation failure (bad config, unstable time step, ...).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Validation(_) => 2,
        }
    }
}

impl From<fracwalk::Error> for CliError {
    fn from(e: fracwalk::Error) -> Self {
        match e {
            fracwalk::Error::Quadrature { .. } => CliError::Runtime(e.to_string()),
            fracwalk::Error::Stability { tau_max, .. } => CliError::Validation(format!("{e}\ntau_max = {tau_max}")),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "fracwalk", version, about = "Lattice random walks for distributed-order fractional diffusion")]
struct Cli {
    /// TOML run configuration; defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run the consistency checks of the command and fail if they do not hold.
    #[arg(long, global = true)]
    selfcheck: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the transition kernel and report its stability.
    Kernel,
    /// Run independent walkers and summarize their final positions.
    Simulate,
    /// Tabulate the radial fundamental solution G(t, r).
    Density,
    /// CF error and KS distance over a sequence of mesh widths.
    Study,
    /// Check the hypersingular symbol identity on a matrix of cases.
    Oracle,
    /// Print the fully populated default configuration.
    Defaults,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let cfg = load(cli)?;
    match cli.command {
        Command::Kernel => commands::kernel(&cfg, cli.selfcheck),
        Command::Simulate => commands::simulate(&cfg),
        Command::Density => commands::density(&cfg, cli.selfcheck),
        Command::Study => commands::study(&cfg),
        Command::Oracle => commands::oracle(&cfg),
        Command::Defaults => {
            print!("{}", RunConfig::default().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
