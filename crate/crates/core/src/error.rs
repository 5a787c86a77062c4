use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("cannot impute {ticker} on {date}: {reason}")]
    Imputation {
        ticker: String,
        date: String,
        reason: &'static str,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            detail: detail.into(),
        }
    }

    /// Process exit code for this error: 2 for I/O and configuration
    /// problems, 1 for numeric or validation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Json { .. } | Error::Config(_) => 2,
            _ => 1,
        }
    }
}
