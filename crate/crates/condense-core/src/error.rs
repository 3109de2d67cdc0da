use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Too few observations for the requested estimator.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Data carry no usable signal (e.g. zero variance).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Inconsistent or invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The y-grid fails the probability-mass check.
    #[error("truncated support: {0}")]
    TruncatedSupport(String),

    /// A chain exceeded its wall-clock budget.
    #[error("timeout: {0}")]
    Timeout(String),

    /// More than the tolerated fraction of study rows failed.
    #[error("study failure rate too high: {failed} of {total} rows failed")]
    StudyFailureRate { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
