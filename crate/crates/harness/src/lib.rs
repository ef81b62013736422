//! Experiment sweeps, CSV output and the `offeval` command line.

use std::path::PathBuf;

pub mod checks;
pub mod cli;
pub mod config;
pub mod output;
pub mod presets;
pub mod runner;

pub use config::{ExperimentConfig, Variant};
pub use output::{emit_csv, read_csv, CSV_HEADER};
pub use runner::{run_bias_vs_n, run_reduction_comparison, Experiment, ResultRow};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] offeval_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
}
