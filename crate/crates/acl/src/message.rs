use std::time::{SystemTime, UNIX_EPOCH};

use crate::agent_id::validate_name;
use crate::{AclError, AgentId, Performative};

/// Milliseconds since the Unix epoch, never zero.
pub fn now_millis() -> u64 {
    let ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    ms.max(1)
}

/// ACL message envelope.
///
/// The receiver list is never empty and the timestamp is always positive;
/// both are checked at construction and again when decoding a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AclMessage {
    pub(crate) performative: Performative,
    pub(crate) sender: AgentId,
    pub(crate) receivers: Vec<AgentId>,
    pub(crate) content: String,
    pub(crate) conversation_id: Option<String>,
    pub(crate) reply_with: Option<String>,
    pub(crate) in_reply_to: Option<String>,
    pub(crate) timestamp: u64,
}

impl AclMessage {
    /// Builds a message stamped with the current time. Conversation fields are unset.
    pub fn new(
        performative: Performative,
        sender: AgentId,
        receivers: Vec<AgentId>,
        content: impl Into<String>,
    ) -> Result<Self, AclError> {
        validate_name(sender.name())?;
        if receivers.is_empty() {
            return Err(AclError::EmptyReceivers);
        }
        Ok(AclMessage {
            performative,
            sender,
            receivers,
            content: content.into(),
            conversation_id: None,
            reply_with: None,
            in_reply_to: None,
            timestamp: now_millis(),
        })
    }

    /// Builds a reply addressed to this message's sender, carrying over the
    /// conversation id and answering `reply_with`.
    pub fn reply(&self, from: AgentId, performative: Performative, content: impl Into<String>) -> AclMessage {
        AclMessage {
            performative,
            sender: from,
            receivers: vec![self.sender.clone()],
            content: content.into(),
            conversation_id: self.conversation_id.clone(),
            reply_with: None,
            in_reply_to: self.reply_with.clone(),
            timestamp: now_millis(),
        }
    }

    pub fn with_conversation_id(mut self, id: impl Into<String>) -> Self {
        self.conversation_id = Some(id.into());
        self
    }

    pub fn with_reply_with(mut self, id: impl Into<String>) -> Self {
        self.reply_with = Some(id.into());
        self
    }

    pub fn with_in_reply_to(mut self, id: impl Into<String>) -> Self {
        self.in_reply_to = Some(id.into());
        self
    }

    pub fn with_sender(mut self, sender: AgentId) -> Self {
        self.sender = sender;
        self
    }

    /// Overrides the timestamp; zero is clamped to one.
    pub fn with_timestamp(mut self, timestamp: u64) -> Self {
        self.timestamp = timestamp.max(1);
        self
    }

    /// Re-stamps the message with the current time. Runtimes call this at send time.
    pub fn stamp(&mut self) {
        self.timestamp = now_millis();
    }

    pub fn performative(&self) -> Performative {
        self.performative
    }

    pub fn sender(&self) -> &AgentId {
        &self.sender
    }

    pub fn receivers(&self) -> &[AgentId] {
        &self.receivers
    }

    pub fn content(&self) -> &str {
        &self.content
    }

    pub fn conversation_id(&self) -> Option<&str> {
        self.conversation_id.as_deref()
    }

    pub fn reply_with(&self) -> Option<&str> {
        self.reply_with.as_deref()
    }

    pub fn in_reply_to(&self) -> Option<&str> {
        self.in_reply_to.as_deref()
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn is_addressed_to(&self, name: &str) -> bool {
        self.receivers.iter().any(|r| r.name() == name)
    }
}
