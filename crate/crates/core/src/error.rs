use std::path::PathBuf;

use thiserror::Error;

use crate::domain::ActivityLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("series is empty")]
    EmptySeries,

    #[error("channel `{0}` has no present samples; series cannot be recovered")]
    UnrecoverableSeries(&'static str),

    #[error("no profile configured for activity {0}")]
    MissingProfile(ActivityLabel),

    #[error("channel `{0}` is constant; correlation is undefined")]
    UndefinedCorrelation(String),

    #[error("stratification impossible: {0}")]
    Stratification(String),

    #[error("model has no training data")]
    UntrainedModel,

    #[error("confusion matrix is empty")]
    EmptyEvaluation,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
