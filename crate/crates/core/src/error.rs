use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("undefined relative standard deviation: {0}")]
    UndefinedRsd(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the failure originated in model evaluation or its transport.
    pub fn is_model_failure(&self) -> bool {
        matches!(self, Error::Model(_))
    }
}

/// Failures raised by scorers, including the wire-protocol client.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("transport error: {0}")]
    Transport(String),

    #[error("handshake timed out after {0:?}")]
    HandshakeTimeout(std::time::Duration),

    #[error("protocol version mismatch: client speaks {expected}, adapter offered {offered}")]
    VersionMismatch { expected: u32, offered: u64 },

    #[error("malformed response ({reason}): {line}")]
    MalformedResponse { line: String, reason: String },

    #[error("model reported an error for request {id}: {message}")]
    Remote { id: u64, message: String },

    #[error("model returned {got} scores for a batch of {expected}")]
    BatchSize { expected: usize, got: usize },
}
