//! Error type shared across the engine.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or extents disagree; the message names the offending axes.
    #[error("dimension error: {0}")]
    Dim(String),

    /// A scalar argument is outside its documented range.
    #[error("range error: {0}")]
    Range(String),

    /// A file or byte stream failed to parse; `offset` is the byte position
    /// at which the problem was detected.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    /// A container's magic string did not match.
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    /// A container entry ends before its declared payload.
    #[error("truncated payload in entry `{entry}`: need {needed} bytes, have {have}")]
    Truncated {
        entry: String,
        needed: usize,
        have: usize,
    },

    /// Two entries in a named container share a name.
    #[error("duplicate entry name `{0}`")]
    DuplicateName(String),

    /// A required item (weight tensor, support class, ...) is absent.
    #[error("missing {0}")]
    Missing(String),

    /// A numeric computation failed (divergence, non-finite values).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Rejection sampling could not place the requested objects.
    #[error("placement failed: {0}")]
    Placement(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
