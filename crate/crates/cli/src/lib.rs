//! Config-driven experiment runner for the `gsgd` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::ExperimentConfig;
pub use error::CliError;
