//! Configuration and drivers for the `skm` experiments.

pub mod commands;
pub mod config;

pub use commands::{exit_code, run, Outcome};
pub use config::{Experiment, ExperimentConfig};
