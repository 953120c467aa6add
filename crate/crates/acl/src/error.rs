use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AclError {
    #[error("message has no receivers")]
    EmptyReceivers,
    #[error("invalid agent name {0:?}")]
    InvalidAgentName(String),
    #[error("invalid container address {0:?}")]
    InvalidContainerAddr(String),
    #[error("unknown performative {0:?}")]
    UnknownPerformative(String),
    #[error("frame payload of {0} bytes exceeds the 16 MiB limit")]
    FrameTooLarge(usize),
    #[error("truncated frame: expected {expected} bytes, got {actual}")]
    TruncatedFrame { expected: usize, actual: usize },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
}
