use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("malformed trace at line {line}: {reason}")]
    MalformedTrace { line: u64, reason: String },

    #[error("inconsistent trace: {0}")]
    InconsistentTrace(String),

    #[error("episode exhausted after {0} slots")]
    EpisodeExhausted(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
