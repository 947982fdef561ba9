use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

/// Errors raised by any pipeline stage.
///
/// Variants fall into three buckets that map onto process exit codes:
/// malformed or unreadable input (1), a violated data invariant (2) and a
/// day with no closing rate (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: missing or invalid header, expected `{expected}`")]
    Header { path: PathBuf, expected: String },

    #[error("duplicate txid {txid} (lines {first_line} and {second_line})")]
    DuplicateTxid {
        txid: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("no closing rate for {0}")]
    MissingRate(NaiveDate),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible testbed spec: {0}")]
    InfeasibleSpec(String),

    #[error("evaluation mismatch: {0}")]
    Evaluation(String),

    #[error("{0}")]
    Empty(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit status for this error: 1 input, 2 invariant, 3 missing rate.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingRate(_) => 3,
            Error::DuplicateTxid { .. } | Error::Invariant(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
