use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),

    #[error("loss must be a scalar, got dims {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("simulator must be frozen before generator training")]
    SimulatorNotFrozen,

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("record {index}: {message}")]
    Record { index: usize, message: String },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short stable identifier, used for machine-readable error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::OutOfRange(_) => "out_of_range",
            Error::MissingGrad(_) => "missing_grad",
            Error::NonScalarLoss(_) => "non_scalar_loss",
            Error::UnknownActivation(_) => "unknown_activation",
            Error::EmptyDataset => "empty_dataset",
            Error::SimulatorNotFrozen => "simulator_not_frozen",
            Error::Format { .. } => "format",
            Error::Record { .. } => "record",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
