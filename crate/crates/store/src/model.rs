use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::StoreError;

/// Milliseconds since the Unix epoch, UTC.
pub type Timestamp = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserStatus {
    Online,
    Offline,
}

/// A position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, StoreError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(StoreError::InvalidLocation { lat, lon });
        }
        Ok(GeoPoint { lat, lon })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_name: String,
    pub password_digest: String,
    pub status: UserStatus,
    /// Peers this user has exchanged direct messages with.
    #[serde(default)]
    pub friends: BTreeSet<String>,
    #[serde(default)]
    pub last_location: Option<GeoPoint>,
    /// Opted in to automatic unblocking of well-behaved users.
    #[serde(default)]
    pub auto_unblock: bool,
    pub created_at: Timestamp,
}

impl UserRecord {
    pub fn new(user_name: impl Into<String>, password_digest: impl Into<String>, created_at: Timestamp) -> Self {
        UserRecord {
            user_name: user_name.into(),
            password_digest: password_digest.into(),
            status: UserStatus::Offline,
            friends: BTreeSet::new(),
            last_location: None,
            auto_unblock: false,
            created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group_name: String,
    pub members: BTreeSet<String>,
    pub created_at: Timestamp,
    #[serde(default)]
    pub archived_at: Option<Timestamp>,
}

impl GroupRecord {
    pub fn new(group_name: impl Into<String>, creator: impl Into<String>, created_at: Timestamp) -> Self {
        GroupRecord {
            group_name: group_name.into(),
            members: BTreeSet::from([creator.into()]),
            created_at,
            archived_at: None,
        }
    }

    pub fn is_member(&self, user: &str) -> bool {
        self.members.contains(user)
    }
}

/// Where a message goes: one user, or every member of a group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "lowercase")]
pub enum Target {
    User(String),
    Group(String),
}

impl Target {
    pub fn name(&self) -> &str {
        match self {
            Target::User(n) | Target::Group(n) => n,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::User(n) => write!(f, "{n}"),
            Target::Group(n) => write!(f, "#{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub message_id: u64,
    pub sender: String,
    pub target: Target,
    pub body: String,
    pub sent_at: Timestamp,
    #[serde(default)]
    pub deleted_for: BTreeSet<String>,
}

impl ChatMessage {
    /// Whether `user` takes part in the conversation, given the current
    /// members of the target group (ignored for direct messages).
    pub fn is_participant(&self, user: &str, group_members: Option<&BTreeSet<String>>) -> bool {
        match &self.target {
            Target::User(to) => self.sender == user || to == user,
            Target::Group(_) => group_members.is_some_and(|m| m.contains(user)),
        }
    }

    pub fn visible_to(&self, user: &str, group_members: Option<&BTreeSet<String>>) -> bool {
        self.is_participant(user, group_members) && !self.deleted_for.contains(user)
    }
}

/// A message before the store assigns its id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewMessage {
    pub sender: String,
    pub target: Target,
    pub body: String,
    pub sent_at: Timestamp,
}

/// Reasons a user can pick from when blocking someone.
pub const PREDEFINED_REASONS: [&str; 5] = ["harassment", "impersonation", "offensive-language", "spam", "unwanted-contact"];

/// Why a block exists. Renders as the predefined name, `custom:<text>` or
/// `auto:<token>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockReason {
    Predefined(String),
    Custom(String),
    /// Set by the lexicon scan; carries the banned token that fired.
    Auto(String),
}

impl BlockReason {
    /// Interprets free text from a user: a predefined name if it is one,
    /// otherwise a custom reason.
    pub fn from_user_text(text: &str) -> BlockReason {
        let t = text.trim();
        let folded = t.to_lowercase();
        if PREDEFINED_REASONS.contains(&folded.as_str()) {
            BlockReason::Predefined(folded)
        } else {
            BlockReason::Custom(t.to_string())
        }
    }

    /// Grouping key for reason statistics: the predefined name, `custom`, or `auto`.
    pub fn category(&self) -> &str {
        match self {
            BlockReason::Predefined(n) => n,
            BlockReason::Custom(_) => "custom",
            BlockReason::Auto(_) => "auto",
        }
    }
}

impl fmt::Display for BlockReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockReason::Predefined(n) => f.write_str(n),
            BlockReason::Custom(t) => write!(f, "custom:{t}"),
            BlockReason::Auto(t) => write!(f, "auto:{t}"),
        }
    }
}

impl FromStr for BlockReason {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, StoreError> {
        if let Some(t) = s.strip_prefix("custom:") {
            return Ok(BlockReason::Custom(t.to_string()));
        }
        if let Some(t) = s.strip_prefix("auto:") {
            return Ok(BlockReason::Auto(t.to_string()));
        }
        if PREDEFINED_REASONS.contains(&s) {
            return Ok(BlockReason::Predefined(s.to_string()));
        }
        Err(StoreError::Corrupt(format!("unknown block reason {s:?}")))
    }
}

impl Serialize for BlockReason {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockReason {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub blocker: String,
    pub blocked: String,
    #[serde(default)]
    pub reason: Option<BlockReason>,
    pub since: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Error,
}

/// One agent action, kept for troubleshooting and usage statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionLogEntry {
    pub at: Timestamp,
    pub agent: String,
    pub action: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ActionLogEntry {
    pub fn new(at: Timestamp, agent: impl Into<String>, action: impl Into<String>, outcome: Outcome) -> Self {
        ActionLogEntry { at, agent: agent.into(), action: action.into(), outcome, user: None, detail: None }
    }

    pub fn with_user(mut self, user: impl Into<String>) -> Self {
        self.user = Some(user.into());
        self
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}
