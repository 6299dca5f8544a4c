//! Experiment harness: configuration, the `simulate`, `fit-stable`,
//! `bias-study` and `estimate` commands, manifests and reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;

pub use config::{Command, EstimatorKind, ExperimentConfig};
pub use error::{CliError, CliResult};
