use thiserror::Error;

/// Errors raised by estimation, simulation and I/O routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmeError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("unit {unit}: {len} observations is too short for {q} sub-samples (need at least {})", 2 * q)]
    TooShort { unit: String, len: usize, q: usize },

    #[error("degenerate {what}: {detail}")]
    Degenerate { what: &'static str, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("identification failure: {0}")]
    Identification(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("experiment aborted: {failed} of {total} replications failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl PmeError {
    pub(crate) fn degenerate(what: &'static str, detail: impl Into<String>) -> Self {
        PmeError::Degenerate {
            what,
            detail: detail.into(),
        }
    }
}

impl From<std::io::Error> for PmeError {
    fn from(e: std::io::Error) -> Self {
        PmeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PmeError>;
