use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Position of one cell in the `samples x backends x variants` annotation tensor.
pub type CellIndex = (usize, usize, usize);

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at row {row}: {message}")]
    Malformed { row: usize, message: String },

    #[error("row {row} is missing field `{field}`")]
    MissingField { row: usize, field: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mutation failed for {mr}: {reason}")]
    MutationFailed {
        mr: String,
        reason: String,
        /// True when the mutator could not be reached at all, as opposed to
        /// returning an unusable completion.
        unreachable: bool,
    },

    #[error("backend `{backend}` unavailable: {reason} ({} cells completed)", completed.len())]
    BackendUnavailable {
        backend: String,
        reason: String,
        completed: Vec<CellIndex>,
    },

    #[error("annotation cache error: {0}")]
    Cache(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("strategy `{0}` is not available")]
    NotAvailable(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("differences have zero variance")]
    ZeroVariance,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
