use std::path::PathBuf;

use thiserror::Error;

/// Reason a LIBSVM line was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("malformed token `{0}`")]
    MalformedToken(String),
    #[error("label `{0}` is not +1 or -1")]
    InvalidLabel(String),
    #[error("non-increasing index {index} after {previous}")]
    NonIncreasingIndex { previous: usize, index: usize },
    #[error("index {index} exceeds declared dimension {dimension}")]
    IndexBeyondDimension { index: usize, dimension: usize },
    #[error("non-finite feature value `{0}`")]
    NonFiniteValue(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },

    #[error("dataset contains no examples")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ragged input: {0}")]
    Ragged(String),

    #[error(
        "write visibility violates declared staleness: read of sequence {sequence} at step {step} \
         misses update {missing} of sequence {writer} (measured {measured} > declared {declared})"
    )]
    DelayViolation {
        sequence: usize,
        step: usize,
        writer: usize,
        missing: usize,
        measured: usize,
        declared: usize,
    },

    #[error("write log incomplete: sequence {sequence} has no write covering update {step}")]
    IncompleteLog { sequence: usize, step: usize },

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
