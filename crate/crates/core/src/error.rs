use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("empty log")]
    EmptyLog,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown attribute '{0}'")]
    UnknownAttribute(String),

    #[error("empty sample")]
    EmptySample,

    #[error("unsupported model format version {found} (this build reads version {expected})")]
    Version { found: u64, expected: u64 },

    #[error("corrupt model file: {0}")]
    Integrity(String),

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
}
