use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid attribute matrix: {0}")]
    InvalidAttributes(String),

    #[error("label {label} outside [0, {classes})")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("malformed data in {path} line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config digest mismatch: stored {stored}, current {current}")]
    DigestMismatch { stored: String, current: String },

    #[error("no valid mutant within {0} retries")]
    MutationExhausted(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    /// Errors caused by bad user input (configs, files, arguments) rather
    /// than by a failure during computation.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::NonFinite(_) | Error::MutationExhausted(_))
            && !matches!(self, Error::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound)
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
