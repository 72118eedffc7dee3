//! Optimization, evaluation and experiment sweeps.

mod adam;
mod batch;
mod eval;
mod fit;
pub mod metrics;
mod sweep;

use std::path::PathBuf;

use icepinn_autodiff::AutodiffError;
use thiserror::Error;

use crate::data::DataError;
use crate::model::ModelError;
use crate::physics::PhysicsError;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batch::Batch;
pub use eval::{
    evaluate, evaluate_predictions, predict, DayReport, EvalReport, MetricSet, MonthReport, PixelMaps, Prediction,
    VariableMetrics, DRIFT_TOLERANCE_KMDAY,
};
pub use fit::{train, train_params, EpochLog, Objective, TrainConfig, TrainOutcome};
pub use metrics::{MetricError, TTest};
pub use sweep::{
    plan_runs, run_sweep, write_results, ModelKind, ResultRow, RunSpec, RunSummary, SweepSpec, RESULTS_FILE, SUMMARY_FILE,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("training diverged at epoch {epoch}, batch {batch}: {what}")]
    Diverged { epoch: usize, batch: usize, what: String },
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, TrainError>;
