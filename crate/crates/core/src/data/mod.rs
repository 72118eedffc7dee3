//! Dataset assembly: normalization, three-day input windows, train/test
//! splits, and the synthetic scenario generator.

mod dataset;
mod norm;
mod split;
pub mod synth;
mod window;

use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

use crate::grid::{GridError, Variable};

pub use dataset::{DailyFields, Dataset, Manifest, MANIFEST_FILE};
pub use norm::{NominalRange, NormalizationSpec};
pub use split::{split_and_sample, SplitPlan};
pub use synth::{synth_scenario, LandLayout, ScenarioConfig, SynthScenario};
pub use window::{build_windows, SampleWindow, INPUT_CHANNELS, INPUT_DAYS, TARGET_CHANNELS};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("no normalization range for variable {0}")]
    UnknownVariable(Variable),
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    EmptySet(String),
    #[error("{path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CFL condition violated: worst-case Courant number {courant:.3} must stay below 0.5")]
    Cfl { courant: f64 },
    #[error("date {0} has no admissible window (needs three complete input days and a target day)")]
    Inadmissible(NaiveDate),
}
