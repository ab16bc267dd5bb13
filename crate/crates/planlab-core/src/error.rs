use std::io;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller broke an operation's contract (bad state, bad shape, reused tape, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A maze failed one of its structural invariants.
    #[error("invalid maze: {0}")]
    InvalidMaze(String),

    /// Internal data is inconsistent (e.g. a distance map with no decreasing action).
    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    /// A serialized file could not be decoded; `offset` is the byte where decoding failed.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
