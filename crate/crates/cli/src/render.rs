//! Plain-text rendering of conversations, listings and pushed events.

use agentmesh_messenger::{Conversation, Event, Notice, UserEntry};
use agentmesh_store::{ChatMessage, Target, Timestamp};
use chrono::{DateTime, FixedOffset, Local, TimeZone, Utc};

pub const DEFAULT_WIDTH: usize = 72;

/// Formats messages for one viewer: received on the left, sent on the
/// right, each stamped with its ISO-8601 local time.
#[derive(Debug, Clone)]
pub struct Renderer {
    pub width: usize,
    /// Fixed offset for timestamps; `None` uses the system time zone.
    pub offset: Option<FixedOffset>,
}

impl Default for Renderer {
    fn default() -> Self {
        Renderer { width: DEFAULT_WIDTH, offset: None }
    }
}

fn one_line(body: &str) -> String {
    body.chars().map(|c| if c == '\n' { '↵' } else if c.is_control() { ' ' } else { c }).collect()
}

impl Renderer {
    pub fn utc() -> Renderer {
        Renderer { width: DEFAULT_WIDTH, offset: FixedOffset::east_opt(0) }
    }

    pub fn timestamp(&self, at: Timestamp) -> String {
        const FMT: &str = "%Y-%m-%dT%H:%M:%S%:z";
        let utc: DateTime<Utc> = Utc.timestamp_millis_opt(at as i64).single().unwrap_or_default();
        match self.offset {
            Some(off) => utc.with_timezone(&off).format(FMT).to_string(),
            None => utc.with_timezone(&Local).format(FMT).to_string(),
        }
    }

    /// One line for one message as seen by `viewer`.
    pub fn message(&self, m: &ChatMessage, viewer: &str) -> String {
        let stamp = self.timestamp(m.sent_at);
        let body = one_line(&m.body);
        if m.sender == viewer {
            let text = format!("{body} [{stamp} #{}]", m.message_id);
            let pad = self.width.saturating_sub(text.chars().count());
            format!("{}{text}", " ".repeat(pad))
        } else {
            let from = match &m.target {
                Target::Group(g) => format!("{}@#{g}", m.sender),
                Target::User(_) => m.sender.clone(),
            };
            format!("[{stamp} #{}] {from}: {body}", m.message_id)
        }
    }

    /// Messages in any order, rendered oldest first.
    pub fn conversation(&self, messages: &[ChatMessage], viewer: &str) -> String {
        let mut sorted: Vec<&ChatMessage> = messages.iter().collect();
        sorted.sort_by_key(|m| m.message_id);
        sorted.iter().map(|m| self.message(m, viewer) + "\n").collect()
    }

    pub fn users(&self, users: &[UserEntry]) -> String {
        users
            .iter()
            .map(|u| match &u.reason {
                Some(r) => format!("{:<20} {:<8} {r}\n", u.user_name, u.status),
                None => format!("{:<20} {}\n", u.user_name, u.status),
            })
            .collect()
    }

    pub fn conversations(&self, convs: &[Conversation]) -> String {
        convs.iter().map(|c| format!("{:<21} {}\n", c.peer.to_string(), self.timestamp(c.last_message_at))).collect()
    }

    pub fn event(&self, e: &Event, viewer: &str) -> String {
        match e {
            Event::Message(m) => self.message(m, viewer),
            Event::Notice(Notice::AutoBlock { message_id, token, blocked_by }) => format!(
                "** message #{message_id} used the banned word \"{token}\"; now blocked by {}",
                blocked_by.join(", ")
            ),
            Event::Notice(Notice::AddedToGroup { group, by }) => format!("** {by} added you to #{group}"),
            Event::Notice(Notice::Crisis { group, alert }) => {
                let kind = serde_json::to_value(alert.kind).ok().and_then(|v| v.as_str().map(str::to_string));
                format!("** {} alert {}: you were added to #{group}", kind.unwrap_or_default(), alert.alert_id)
            }
            Event::Notice(Notice::Unblocked { by }) => format!("** {by} unblocked you"),
        }
    }
}
