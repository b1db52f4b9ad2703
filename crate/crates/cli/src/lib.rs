//! Experiment runner for the `gamn` optimizer: configuration loading,
//! Monte Carlo orchestration and CSV output.

pub mod commands;
pub mod config;

pub use commands::{execute, Cli, CliError, Command};
pub use config::{ConfigError, ExperimentConfig};
