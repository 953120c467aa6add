use std::io;

use agentmesh_store::StoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("invalid geofence: {0}")]
    InvalidFence(String),
    #[error("invalid crisis alert: {0}")]
    InvalidAlert(String),
    #[error("malformed alert feed line {line}: {reason}")]
    MalformedAlert { line: usize, reason: String },
    #[error("tokens both banned and good: {0:?}")]
    LexiconOverlap(Vec<String>),
    #[error("malformed server directory: {0}")]
    MalformedDirectory(String),
    #[error("reputation provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}
