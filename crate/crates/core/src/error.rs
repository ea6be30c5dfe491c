use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("document `{0}` has no tokens")]
    EmptyDocument(String),

    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),

    #[error("unknown document id `{0}`")]
    UnknownDocument(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("token at sentence {sent}, offset {offset} is `{found}`, expected `{expected}`")]
    PositionMismatch {
        sent: usize,
        offset: usize,
        found: String,
        expected: String,
    },

    #[error("sample has {needed} distinct unknown words but only {slots} slots ({overflow} over)")]
    UnkOverflow {
        needed: usize,
        slots: usize,
        overflow: usize,
    },

    #[error("token id {0} cannot be recovered to a surface form")]
    Unrecoverable(usize),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("backward called on an empty tape or a non-scalar node")]
    NoForward,

    #[error("vocabulary fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a numeric or internal
    /// failure.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            Error::NonFinite(_) | Error::NoForward | Error::Shape { .. }
        )
    }
}
