use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown {kind} name `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("{kind} id {id} out of range (count {count})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        count: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("zero variance: all samples are identical")]
    ZeroVariance,

    #[error(
        "only {described} entities have usable descriptions; PCA needs at least 2 (use random-only init)"
    )]
    TooFewDescribed { described: usize },

    #[error("non-finite value at epoch {epoch}, triple {triple_index}: {detail}")]
    NonFinite {
        epoch: usize,
        triple_index: usize,
        detail: String,
    },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
