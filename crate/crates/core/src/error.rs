use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("tag encoding error: {0}")]
    Encoding(String),

    #[error("validation error at line {line}, field `{field}`: {message}")]
    Validation {
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate relation `{0}` in relation list")]
    DuplicateRelation(String),

    #[error("non-finite loss {value} at sentence {sentence}")]
    NonFiniteLoss { sentence: usize, value: f64 },

    #[error("model/corpus mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failures specific to reading a checkpoint file.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic line)")]
    BadMagic,

    #[error("checkpoint version {found} is not supported (expected version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("malformed checkpoint header: {0}")]
    Header(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("manifest disagrees with model layout: {0}")]
    Manifest(String),

    #[error("{0} unexpected bytes after the last tensor payload")]
    TrailingBytes(usize),
}
