use std::path::PathBuf;

use thiserror::Error;
use tvsurv_autodiff::AutodiffError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: row {row}, field `{field}`: {reason}")]
    Schema {
        path: String,
        row: usize,
        field: String,
        reason: String,
    },
    #[error("data: {0}")]
    Data(String),
    #[error("{0}")]
    Grid(String),
    #[error("propensity fit: {0}")]
    Separation(String),
    #[error("non-finite loss at epoch {epoch}, batch ids {ids:?}")]
    NonFiniteLoss { epoch: usize, ids: Vec<String> },
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Schema { .. }
            | Error::Data(_)
            | Error::Grid(_)
            | Error::Checkpoint(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => 3,
            Error::Separation(_)
            | Error::NonFiniteLoss { .. }
            | Error::Numerical(_)
            | Error::Autodiff(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
