//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sample '{0}' has no group label")]
    MissingLabel(String),
    #[error("sample '{0}' is labelled more than once")]
    DuplicateLabel(String),
    #[error("group '{0}' has no samples")]
    EmptyGroup(&'static str),
    #[error("no taxa pass the prevalence filter at threshold {0}")]
    EmptyFilterResult(f64),
    #[error("sample '{0}' has zero total reads")]
    ZeroTotal(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("covariance is not positive semidefinite (eigenvalue {0:e})")]
    Indefinite(f64),
    #[error("no eigenvalue reaches the cutoff {0}; the covariance is degenerate")]
    DegenerateCovariance(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("only one class is present in the training labels")]
    SingleClass,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid JSON in {path}: {message}")]
    Json { path: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
