use std::fmt;

use crate::metric::Witness;

/// Location of a parse failure in a text instance, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input (non-square matrix, NaN, negative entry, bad tree).
    #[error("format error: {message}")]
    Format {
        message: String,
        position: Option<Position>,
    },

    /// Input parsed fine but violates the metric axioms.
    #[error("invalid instance: {0}")]
    InvalidInstance(Witness),

    /// Instance is larger than a configured cap.
    #[error("size cap exceeded: n = {n} > {cap} ({what}); raise ULTRAMEDIAN_MAX_N or disable the audit")]
    CapExceeded { what: &'static str, n: usize, cap: usize },

    /// An experiment assertion did not hold.
    #[error("assertion failed: {0}")]
    Assertion(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            message: msg.into(),
            position: None,
        }
    }

    pub(crate) fn format_at(msg: impl Into<String>, line: usize, column: usize) -> Self {
        let message = msg.into();
        Error::Format {
            message: format!("{message} at {line}:{column}"),
            position: Some(Position { line, column }),
        }
    }

    /// Stable process exit code for this error class.
    ///
    /// 2 usage/domain, 3 I/O, 4 invalid instance, 5 assertion failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::CapExceeded { .. } => 2,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
            Error::Format { .. } | Error::InvalidInstance(_) => 4,
            Error::Assertion(_) => 5,
            Error::Internal(_) => 70,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
