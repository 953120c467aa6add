use agentmesh_store::StoreError;
use thiserror::Error;

/// Errors the chat manager reports to clients. The variant name is the
/// wire code.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChatError {
    #[error("user name already taken")]
    DuplicateUserName,
    #[error("password must be at least {0} characters")]
    WeakPassword(usize),
    #[error("invalid name: {0}")]
    InvalidName(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("wrong password")]
    BadCredentials,
    #[error("user {0} is already online")]
    AlreadyOnline(String),
    #[error("the client agent must be named after the user")]
    AgentMismatch,
    #[error("log in first")]
    NotLoggedIn,
    #[error("unknown group {0}")]
    UnknownGroup(String),
    #[error("not a member of {0}")]
    NotAMember(String),
    #[error("unknown peer {0}")]
    UnknownPeer(String),
    #[error("group name already taken")]
    DuplicateGroupName,
    #[error("you blocked {0}")]
    TargetBlocked(String),
    #[error("{0} is already a member")]
    AlreadyMember(String),
    #[error("cannot block yourself")]
    SelfBlock,
    #[error("{0} is already blocked")]
    AlreadyBlocked(String),
    #[error("{0} is not blocked")]
    NotBlocked(String),
    #[error("{0} blocked you")]
    BlockedByTarget(String),
    #[error("message body exceeds {0} bytes")]
    BodyTooLarge(usize),
    #[error("unknown message {0}")]
    UnknownMessage(u64),
    #[error("not a participant of message {0}")]
    NotAParticipant(u64),
    #[error("coordinates out of range")]
    InvalidLocation,
    #[error("admin key required")]
    Forbidden,
    #[error("unknown operation {0}")]
    UnknownOp(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("reputation provider unavailable")]
    ProviderUnavailable,
    #[error("internal error: {0}")]
    Internal(String),
}

impl ChatError {
    pub fn code(&self) -> &'static str {
        match self {
            ChatError::DuplicateUserName => "DuplicateUserName",
            ChatError::WeakPassword(_) => "WeakPassword",
            ChatError::InvalidName(_) => "InvalidName",
            ChatError::UnknownUser(_) => "UnknownUser",
            ChatError::BadCredentials => "BadCredentials",
            ChatError::AlreadyOnline(_) => "AlreadyOnline",
            ChatError::AgentMismatch => "AgentMismatch",
            ChatError::NotLoggedIn => "NotLoggedIn",
            ChatError::UnknownGroup(_) => "UnknownGroup",
            ChatError::NotAMember(_) => "NotAMember",
            ChatError::UnknownPeer(_) => "UnknownPeer",
            ChatError::DuplicateGroupName => "DuplicateGroupName",
            ChatError::TargetBlocked(_) => "TargetBlocked",
            ChatError::AlreadyMember(_) => "AlreadyMember",
            ChatError::SelfBlock => "SelfBlock",
            ChatError::AlreadyBlocked(_) => "AlreadyBlocked",
            ChatError::NotBlocked(_) => "NotBlocked",
            ChatError::BlockedByTarget(_) => "BlockedByTarget",
            ChatError::BodyTooLarge(_) => "BodyTooLarge",
            ChatError::UnknownMessage(_) => "UnknownMessage",
            ChatError::NotAParticipant(_) => "NotAParticipant",
            ChatError::InvalidLocation => "InvalidLocation",
            ChatError::Forbidden => "Forbidden",
            ChatError::UnknownOp(_) => "UnknownOp",
            ChatError::BadRequest(_) => "BadRequest",
            ChatError::ProviderUnavailable => "ProviderUnavailable",
            ChatError::Internal(_) => "Internal",
        }
    }

    /// Internal errors are answered with `failure`, everything else with
    /// `refuse`.
    pub fn is_internal(&self) -> bool {
        matches!(self, ChatError::Internal(_))
    }
}

impl From<StoreError> for ChatError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownUser(u) => ChatError::UnknownUser(u),
            StoreError::UnknownGroup(g) => ChatError::UnknownGroup(g),
            StoreError::DuplicateUser(_) => ChatError::DuplicateUserName,
            StoreError::DuplicateGroup(_) => ChatError::DuplicateGroupName,
            StoreError::AlreadyMember { user, .. } => ChatError::AlreadyMember(user),
            StoreError::NotAMember { group, .. } => ChatError::NotAMember(group),
            StoreError::AlreadyBlocked { blocked, .. } => ChatError::AlreadyBlocked(blocked),
            StoreError::NotBlocked { blocked, .. } => ChatError::NotBlocked(blocked),
            StoreError::SelfBlock => ChatError::SelfBlock,
            StoreError::UnknownMessage(id) => ChatError::UnknownMessage(id),
            StoreError::InvalidLocation { .. } => ChatError::InvalidLocation,
            StoreError::InvalidTtl => ChatError::BadRequest("ttl must be positive".into()),
            other => ChatError::Internal(other.to_string()),
        }
    }
}
