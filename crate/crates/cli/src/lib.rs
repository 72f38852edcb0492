//! Experiment driver behind the `expedition` binary: config files in, seeded
//! runs of the relational iterator, tree-shape maximizer and dimension fits,
//! and plain CSV / JSON reports out.

pub mod census;
pub mod config;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, Mode};
pub use report::{emit_report, run_experiment, ExperimentReport, Format, Outcome, RunOptions};

#[derive(Debug, Error)]
pub enum ExpeditionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Bad input data, e.g. an unreadable profile for fit mode.
    #[error("{stage}: {message}")]
    Input { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Runtime { stage: &'static str, message: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExpeditionError {
    /// 1 for anything wrong with the inputs, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpeditionError::Config(_) | ExpeditionError::Input { .. } => 1,
            ExpeditionError::Runtime { .. } | ExpeditionError::Write { .. } => 2,
        }
    }
}
