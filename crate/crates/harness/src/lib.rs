//! Experiment harness: configuration, runs, result files and plot data.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;

pub use config::{load_config, ExperimentConfig, Mode};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, HistoryRow, Outcome, Summary};
