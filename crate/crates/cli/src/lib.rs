//! Experiment harness for personalized coupled tensor decomposition.
//!
//! Commands read a TOML [`config::ExperimentConfig`], run seeded Monte Carlo
//! trials and write CSV tables, a text summary and a `manifest.json` with
//! SHA-256 checksums of every output file.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use commands::{run, Outcome};
pub use config::{ExperimentConfig, Mode};
pub use error::{CliError, CliResult};
