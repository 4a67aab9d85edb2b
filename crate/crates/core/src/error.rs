use std::path::PathBuf;

use crate::types::EnvId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("no classified behavior: ratio is undefined for zero counts")]
    NoClassifiedBehavior,

    #[error("mixed environments: expected {expected}, found {found}")]
    MixedEnvironments { expected: EnvId, found: EnvId },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid tree edit: {0}")]
    TreeEdit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
