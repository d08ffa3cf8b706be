//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by ingestion, graph construction, optimization and
/// evaluation. `Divergence` is kept separate so callers can map it to a
/// distinct exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("stream error: {0}")]
    Stream(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("evaluation error: {0}")]
    Eval(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
