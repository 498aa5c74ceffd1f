use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("invalid hardware descriptor '{name}': {msg}")]
    InvalidHardware { name: String, msg: String },

    #[error("invalid split configuration: {0}")]
    InvalidSplit(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("split {split} sums to {sum}, kernel has np = {np}")]
    SplitMismatch { split: String, sum: usize, np: usize },

    #[error("{0} is outside [0, 1]")]
    RatioOutOfRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("row {row}, column '{column}': {msg}")]
    Schema { row: usize, column: String, msg: String },

    #[error("unknown hardware '{0}'")]
    UnknownHardware(String),

    #[error("not enough rows: need at least {need}, got {got}")]
    TooFewRows { need: usize, got: usize },

    #[error("feature vector has {got} entries, model expects {expected}")]
    Arity { expected: usize, got: usize },

    #[error("missing ECM field '{0}' for this overlap hypothesis")]
    MissingEcmField(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
