use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hex id {0:?}: expected 15 lowercase hexadecimal characters")]
    InvalidHexId(String),

    #[error("{0}")]
    Domain(String),

    #[error("{path}: row {row}: {message}")]
    Malformed {
        path: String,
        row: usize,
        message: String,
    },

    #[error("{path}: bad header {found:?}, expected {expected:?}")]
    Header {
        path: String,
        found: String,
        expected: String,
    },

    #[error("{0}")]
    EmptySelection(String),

    #[error("{0}")]
    NotFound(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidHexId(_) => "invalid_hex_id",
            Error::Domain(_) => "domain",
            Error::Malformed { .. } => "malformed",
            Error::Header { .. } => "header",
            Error::EmptySelection(_) => "empty_selection",
            Error::NotFound(_) => "not_found",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
