//! JSON carried in the content of messages between clients and the chat
//! manager.
//!
//! A request is `{"op": "...", "args": {...}}`. The reply, correlated by
//! conversation id, is `{"ok": true, "value": ...}` or
//! `{"ok": false, "error": "<ErrorName>", "detail": "..."}`. Pushed
//! events use conversation id [`PUSH_CONVERSATION`] and the shape
//! `{"event": "message" | "notice", "payload": ...}`.

use agentmesh_sensitivity::CrisisAlert;
use agentmesh_store::{ChatMessage, Target, Timestamp};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ChatError;

/// DF service type of the chat manager.
pub const SERVICE_TYPE: &str = "chat";
pub const SERVICE_DESCRIPTION: &str = "messenger routing and catalog";
/// Conversation id of every event pushed by the chat manager.
pub const PUSH_CONVERSATION: &str = "push";

pub mod ops {
    pub const REGISTER_USER: &str = "registerUser";
    pub const LOGIN_USER: &str = "loginUser";
    pub const LOGOUT: &str = "logout";
    pub const LIST_USERS: &str = "listUsers";
    pub const LIST_CONVERSATIONS: &str = "listConversations";
    pub const LIST_GROUP_MEMBERS: &str = "listGroupMembers";
    pub const FETCH_HISTORY: &str = "fetchHistory";
    pub const CREATE_GROUP: &str = "createGroup";
    pub const ADD_TO_GROUP: &str = "addToGroup";
    pub const LEAVE_GROUP: &str = "leaveGroup";
    pub const BLOCK_USER: &str = "blockUser";
    pub const UNBLOCK_USER: &str = "unblockUser";
    pub const SEND_MESSAGE: &str = "sendMessage";
    pub const DELETE_MESSAGE: &str = "deleteMessage";
    pub const DELETE_CONVERSATION: &str = "deleteConversation";
    pub const REPORT_POSITION: &str = "reportPosition";
    pub const SET_AUTO_UNBLOCK: &str = "setAutoUnblock";
    pub const SUGGEST: &str = "suggest";

    pub const PURGE_LOGS: &str = "purgeLogs";
    pub const ARCHIVE_GROUPS: &str = "archiveGroups";
    pub const REVIEW_INDEXES: &str = "reviewIndexes";
    pub const BUILD_PHRASES: &str = "buildPhrases";
    pub const USAGE_REPORT: &str = "usageReport";
    pub const INJECT_ALERT: &str = "injectAlert";
    pub const RUN_MAINTENANCE: &str = "runMaintenance";

    /// Operations that require the server's admin key.
    pub const ADMIN: [&str; 7] =
        [PURGE_LOGS, ARCHIVE_GROUPS, REVIEW_INDEXES, BUILD_PHRASES, USAGE_REPORT, INJECT_ALERT, RUN_MAINTENANCE];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub op: String,
    #[serde(default)]
    pub args: Value,
}

impl Request {
    pub fn new(op: &str, args: Value) -> Self {
        Request { op: op.to_string(), args }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("requests serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Reply {
    pub fn from_result(result: &Result<Value, ChatError>) -> Reply {
        match result {
            Ok(v) => Reply { ok: true, value: Some(v.clone()), error: None, detail: None },
            Err(e) => Reply { ok: false, value: None, error: Some(e.code().to_string()), detail: Some(e.to_string()) },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("replies serialize")
    }
}

/// Presence of a user as shown to a particular viewer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presence {
    Online,
    Offline,
    /// The viewer blocked this user and may not see their status.
    Hidden,
}

impl Presence {
    pub fn as_str(self) -> &'static str {
        match self {
            Presence::Online => "online",
            Presence::Offline => "offline",
            Presence::Hidden => "hidden",
        }
    }
}

impl std::fmt::Display for Presence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserEntry {
    pub user_name: String,
    pub status: Presence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UserFilter {
    All,
    Blocked,
    NotInGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConversationKind {
    Direct,
    Group,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub peer: Target,
    pub last_message_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupView {
    pub group_name: String,
    pub members: Vec<String>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginInfo {
    pub user_name: String,
    pub token: String,
}

/// Something the chat manager tells a client without being asked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "payload", rename_all = "lowercase")]
pub enum Event {
    Message(ChatMessage),
    Notice(Notice),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Notice {
    /// Your message contained a banned word and these users now block you.
    AutoBlock { message_id: u64, token: String, blocked_by: Vec<String> },
    AddedToGroup { group: String, by: String },
    /// You were placed in a crisis group because you are near the alert.
    Crisis { group: String, alert: CrisisAlert },
    /// Your reputation was good enough for an opted-in user to unblock you.
    Unblocked { by: String },
}

impl Event {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}
