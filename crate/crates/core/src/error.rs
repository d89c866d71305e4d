use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("parameter vector has {got} entries, {family} expects {expected}")]
    DimensionMismatch {
        family: String,
        expected: usize,
        got: usize,
    },

    #[error("inadmissible parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("recursion produced a non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("series of length {n} is too short for a model with {dim} free parameters")]
    TooShort { n: usize, dim: usize },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("degenerate residuals: {0}")]
    DegenerateResiduals(String),

    #[error("matrix is numerically singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("every candidate failed to fit")]
    AllCandidatesFailed,

    #[error("every replication failed")]
    AllReplicationsFailed,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
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
