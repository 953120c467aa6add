use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("user {0:?} already exists")]
    DuplicateUser(String),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("group {0:?} already exists")]
    DuplicateGroup(String),
    #[error("unknown group {0:?}")]
    UnknownGroup(String),
    #[error("{user:?} is already a member of {group:?}")]
    AlreadyMember { user: String, group: String },
    #[error("{user:?} is not a member of {group:?}")]
    NotAMember { user: String, group: String },
    #[error("{blocker:?} already blocks {blocked:?}")]
    AlreadyBlocked { blocker: String, blocked: String },
    #[error("{blocker:?} does not block {blocked:?}")]
    NotBlocked { blocker: String, blocked: String },
    #[error("a user cannot block themselves")]
    SelfBlock,
    #[error("unknown message {0}")]
    UnknownMessage(u64),
    #[error("location ({lat}, {lon}) out of range")]
    InvalidLocation { lat: f64, lon: f64 },
    #[error("ttl must be positive")]
    InvalidTtl,
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("corrupt store data: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}
