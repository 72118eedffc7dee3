use std::io::ErrorKind;
use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::grid::GridError;
use crate::model::ModelError;
use crate::physics::PhysicsError;
use crate::train::TrainError;

/// Top-level error of the run commands.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Bad input the user can fix, as opposed to a failure while running.
fn grid_is_validation(e: &GridError) -> bool {
    !matches!(e, GridError::Io { source, .. } if source.kind() != ErrorKind::NotFound)
}

fn data_is_validation(e: &DataError) -> bool {
    match e {
        DataError::Grid(g) => grid_is_validation(g),
        DataError::Io { source, .. } => source.kind() == ErrorKind::NotFound,
        _ => true,
    }
}

fn model_is_validation(e: &ModelError) -> bool {
    match e {
        ModelError::Autodiff(_) => false,
        ModelError::Io { source, .. } => source.kind() == ErrorKind::NotFound,
        _ => true,
    }
}

impl Error {
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Grid(e) => grid_is_validation(e),
            Error::Data(e) => data_is_validation(e),
            Error::Physics(e) => matches!(e, PhysicsError::Weights(_) | PhysicsError::GeometryMismatch(_)),
            Error::Model(e) => model_is_validation(e),
            Error::Train(e) => match e {
                TrainError::Config(_) => true,
                TrainError::Data(d) => data_is_validation(d),
                TrainError::Model(m) => model_is_validation(m),
                TrainError::Physics(p) => matches!(p, PhysicsError::Weights(_) | PhysicsError::GeometryMismatch(_)),
                _ => false,
            },
            Error::Config(_) => true,
            Error::Io { .. } => false,
        }
    }

    /// 1 for validation errors, 2 for runtime and numeric failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            1
        } else {
            2
        }
    }
}
