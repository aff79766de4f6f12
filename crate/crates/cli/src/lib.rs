//! Experiment front end for the K-step return estimators: corpus generation,
//! the fit-teacher / pre-distill / RL pipeline, bias and variance sweeps,
//! plot data and an oracle self-check.

pub mod cli;
pub mod config;
pub mod error;
pub mod oracle_check;
pub mod pipeline;
pub mod plots;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
