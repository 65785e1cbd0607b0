use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the learners, environments and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The environment broke a contract the learner relies on (for example
    /// a demand above `R_max`, or a policy returning the wrong cache size).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("nondeterminism detected: {0}")]
    Nondeterminism(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by input data rather than configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Io { .. })
    }
}
