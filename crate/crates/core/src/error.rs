use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the decoding stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid phrase {phrase:?}: {message}")]
    Alignment { phrase: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("participants not covered by the split: {0:?}")]
    UnassignedParticipants(Vec<String>),

    #[error("sequence length {len} outside the supported range 1..={max}")]
    SequenceLength { len: usize, max: usize },

    #[error("unencodable character {0:?}")]
    Unencodable(char),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("checkpoint integrity check failed: {0}")]
    Integrity(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("session {0} not found")]
    SessionNotFound(String),

    #[error("timestamp {t_ms} precedes previous point at {prev_ms}")]
    Ordering { t_ms: i64, prev_ms: i64 },

    #[error("session holds {max} points already; start a new session to continue typing")]
    Capacity { max: usize },

    #[error("session has no points to remove")]
    EmptySession,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
