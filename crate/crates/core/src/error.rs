use thiserror::Error;

/// Errors surfaced by the trajectory pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Configuration file or parameter problems.
    #[error("config error{}: {msg}", .line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },

    /// Column/role mapping problems detected before any row is read.
    #[error("schema error: {0}")]
    Schema(String),

    /// Malformed or inconsistent source data; `row` is 1-based and counts the header.
    #[error("{file}:{row}: {msg}")]
    Ingest { file: String, row: usize, msg: String },

    /// An operation was called with arguments outside its domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Correlation is undefined for the given inputs (zero variance, too short).
    #[error("undefined correlation: {0}")]
    Correlation(String),

    /// Least-squares calibration failed (rank-deficient regressors).
    #[error("calibration error: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Invariant violation that indicates a bug rather than bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            msg: msg.into(),
        }
    }

    pub fn config_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Config {
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub fn ingest(file: impl Into<String>, row: usize, msg: impl Into<String>) -> Self {
        Error::Ingest {
            file: file.into(),
            row,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
