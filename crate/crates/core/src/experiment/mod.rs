//! Seeded Monte Carlo sweeps over pilot length or SNR, written as CSV.

mod config;
mod convergence;
mod runner;

pub use config::{parse_config, Algorithm, ConfigError, ExperimentConfig, SweepAxis, SweepPoint};
pub use convergence::{report_convergence, ConvergenceReport, ConvergenceRow, CONVERGENCE_HEADER};
pub use runner::{
    child_seed, run_experiment, splitmix64, ExperimentOutput, SummaryRow, TrialRecord, CSV_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Runtime(String),
}
