//! Error types shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A dataset file could not be read.
    #[error("cannot load {path}: {source}")]
    Load {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A dataset line did not have the expected shape.
    #[error("{file}:{line}: {message}")]
    DataParse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    /// A scoring-function text could not be parsed.
    #[error("invalid scoring function text: {0}")]
    SfParse(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument violated a precondition (dimension mismatch, bad index).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A numeric failure (non-finite value) with the context it arose in.
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
