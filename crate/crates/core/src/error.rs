use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("adjudicator failure (retryable={retryable}): {message}")]
    Adjudicator { message: String, retryable: bool },

    #[error("external client failure: {0}")]
    Client(String),

    #[error("workspace is missing stages: {}", .stages.join(", "))]
    IncompleteWorkspace { stages: Vec<String> },

    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
