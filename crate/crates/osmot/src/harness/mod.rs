//! Experiment harness: configuration, the closed learning loop, parameter
//! sweeps, evaluation metrics, patience calibration and file persistence.

use thiserror::Error;

pub mod calibrate;
pub mod config;
pub mod exp;
pub mod io;
pub mod metrics;

pub use calibrate::{calibrate_patience, fraction_past_five};
pub use config::{ExperimentConfig, LoopConfig, TrainConfig, KNOWN_KEYS};
pub use exp::{
    run_cell, run_experiment, sweep_by_name, CellResult, CellSpec, LoopState, ResultRecord,
    ResultsTable, Sweep,
};
pub use metrics::{click_rank_histogram, evaluate_ranker, MetricsRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("version header mismatch: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training error: {0}")]
    Learner(String),
    #[error("calibration error: {0}")]
    Calibration(String),
}

impl From<crate::learner::LearnerError> for HarnessError {
    fn from(e: crate::learner::LearnerError) -> Self {
        HarnessError::Learner(e.to_string())
    }
}
