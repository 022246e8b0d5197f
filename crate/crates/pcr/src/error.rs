use std::path::PathBuf;

use thiserror::Error;

use crate::remote::RemoteError;

#[derive(Debug, Error)]
pub enum PcrError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] pcr_core::Error),
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("missing input: {}", path.display())]
    MissingInput { path: PathBuf },
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error("{0}")]
    Other(String),
}

impl PcrError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PcrError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        PcrError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PcrError::MissingInput { .. } => 2,
            PcrError::Config { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = PcrError> = std::result::Result<T, E>;
