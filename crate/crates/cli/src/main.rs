use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perstd_cli::commands::EXIT_ERROR;
use perstd_cli::{run, CliResult, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "perstd", version, about = "Personalized coupled tensor decomposition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// NRMSE against SNR for the semi-algebraic and ALS solvers.
    SynthSnr(Common),
    /// NRMSE when the common tensor differs between datasets.
    AblateAlpha(Common),
    /// NRMSE over a grid of misspecified ranks.
    AblateRank(Common),
    /// Cloudy HSI/MSI fusion against a model without distinct terms.
    Fuse(Common),
    /// Generic uniqueness conditions (exit code 2 if not guaranteed).
    CheckUniqueness(Common),
    /// Decompose tensors read from files.
    Decompose(Common),
    /// Write a synthetic data set and a matching decompose configuration.
    Generate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; built-in three-dataset defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
}

fn load(c: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_toml("", ".")?,
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        // Given on the command line, so relative to the working directory.
        cfg.output_dir = std::env::current_dir().map(|d| d.join(o)).unwrap_or_else(|_| o.clone());
    }
    if let Some(r) = c.runs {
        cfg.runs = r;
    }
    if let Some(r) = c.restarts {
        cfg.solver.restarts = r;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match &cli.command {
        Command::SynthSnr(c) => (Mode::SynthSnr, c),
        Command::AblateAlpha(c) => (Mode::AblateAlpha, c),
        Command::AblateRank(c) => (Mode::AblateRank, c),
        Command::Fuse(c) => (Mode::Fuse, c),
        Command::CheckUniqueness(c) => (Mode::CheckUniqueness, c),
        Command::Decompose(c) => (Mode::Decompose, c),
        Command::Generate(c) => (Mode::Generate, c),
    };
    match load(common).and_then(|cfg| run(mode, &cfg)) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("results in {}", outcome.output_dir.display());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("perstd {}: {e}", mode.name());
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
