use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::{AclMessage, AgentId, Performative};

pub const DEFAULT_QUEUE_LIMIT: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueueError {
    #[error("message is not addressed to queue owner {0}")]
    WrongOwner(String),
    #[error("queue of {0} is closed")]
    Closed(String),
}

/// Receives the failure replies produced when a full queue rejects a message.
pub trait ReplySink: Send + Sync {
    fn bounce(&self, reply: AclMessage);
}

impl<F> ReplySink for F
where
    F: Fn(AclMessage) + Send + Sync,
{
    fn bounce(&self, reply: AclMessage) {
        self(reply)
    }
}

/// Selects messages by performative, sender name and conversation id.
/// Absent fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageTemplate {
    pub performative: Option<Performative>,
    pub sender_name: Option<String>,
    pub conversation_id: Option<String>,
}

impl MessageTemplate {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn performative(p: Performative) -> Self {
        MessageTemplate { performative: Some(p), ..Self::default() }
    }

    pub fn conversation(id: impl Into<String>) -> Self {
        MessageTemplate { conversation_id: Some(id.into()), ..Self::default() }
    }

    pub fn from_sender(mut self, name: impl Into<String>) -> Self {
        self.sender_name = Some(name.into());
        self
    }

    pub fn matches(&self, msg: &AclMessage) -> bool {
        self.performative.is_none_or(|p| p == msg.performative())
            && self.sender_name.as_deref().is_none_or(|s| s == msg.sender().name())
            && self
                .conversation_id
                .as_deref()
                .is_none_or(|c| Some(c) == msg.conversation_id())
    }
}

struct State {
    entries: VecDeque<AclMessage>,
    closed: bool,
}

struct Inner {
    owner: AgentId,
    limit: usize,
    state: Mutex<State>,
    available: Condvar,
    sink: Option<Arc<dyn ReplySink>>,
}

impl Inner {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn put(&self, msg: AclMessage) -> Result<bool, QueueError> {
        if !msg.is_addressed_to(self.owner.name()) {
            return Err(QueueError::WrongOwner(self.owner.to_string()));
        }
        let mut state = self.lock();
        if state.closed {
            return Err(QueueError::Closed(self.owner.to_string()));
        }
        if state.entries.len() < self.limit {
            state.entries.push_back(msg);
            drop(state);
            self.available.notify_one();
            return Ok(true);
        }
        drop(state);
        // Failures are never bounced, so two full queues cannot ping-pong.
        if !matches!(msg.performative(), Performative::Failure | Performative::NotUnderstood) {
            if let Some(sink) = &self.sink {
                let content = format!(r#"{{"error":"QueueFull","receiver":"{}"}}"#, self.owner);
                sink.bounce(msg.reply(self.owner.clone(), Performative::Failure, content));
            }
        }
        Ok(false)
    }
}

/// Private FIFO message queue of one agent.
///
/// Any number of producers append through [`QueueSender`] handles; only the
/// owner holding the `MessageQueue` removes entries. The queue is bounded:
/// once `limit` messages are waiting, new arrivals are rejected and a
/// `failure` reply goes to their sender through the configured [`ReplySink`].
pub struct MessageQueue {
    inner: Arc<Inner>,
}

/// Producer handle for a [`MessageQueue`].
#[derive(Clone)]
pub struct QueueSender {
    inner: Arc<Inner>,
}

impl MessageQueue {
    pub fn new(owner: AgentId, limit: usize) -> Self {
        Self::build(owner, limit, None)
    }

    pub fn with_reply_sink(owner: AgentId, limit: usize, sink: Arc<dyn ReplySink>) -> Self {
        Self::build(owner, limit, Some(sink))
    }

    fn build(owner: AgentId, limit: usize, sink: Option<Arc<dyn ReplySink>>) -> Self {
        MessageQueue {
            inner: Arc::new(Inner {
                owner,
                limit,
                state: Mutex::new(State { entries: VecDeque::new(), closed: false }),
                available: Condvar::new(),
                sink,
            }),
        }
    }

    pub fn owner(&self) -> &AgentId {
        &self.inner.owner
    }

    pub fn limit(&self) -> usize {
        self.inner.limit
    }

    pub fn sender(&self) -> QueueSender {
        QueueSender { inner: Arc::clone(&self.inner) }
    }

    /// Appends `msg`. Returns `Ok(false)` when the queue is full.
    pub fn put(&self, msg: AclMessage) -> Result<bool, QueueError> {
        self.inner.put(msg)
    }

    /// Removes the head, or with a template the earliest matching entry.
    pub fn take(&self, template: Option<&MessageTemplate>) -> Option<AclMessage> {
        let mut state = self.inner.lock();
        take_from(&mut state.entries, template)
    }

    /// Like [`take`](Self::take) but waits up to `timeout` for a match.
    /// Returns `None` early if the queue is closed.
    pub fn take_timeout(&self, template: Option<&MessageTemplate>, timeout: Duration) -> Option<AclMessage> {
        let deadline = Instant::now() + timeout;
        let mut state = self.inner.lock();
        loop {
            if let Some(msg) = take_from(&mut state.entries, template) {
                return Some(msg);
            }
            if state.closed {
                return None;
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            state = self
                .inner
                .available
                .wait_timeout(state, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Discards all entries and rejects further puts. Wakes blocked takers.
    pub fn close(&self) {
        let mut state = self.inner.lock();
        state.closed = true;
        state.entries.clear();
        drop(state);
        self.inner.available.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().closed
    }
}

impl QueueSender {
    pub fn owner(&self) -> &AgentId {
        &self.inner.owner
    }

    /// See [`MessageQueue::put`].
    pub fn put(&self, msg: AclMessage) -> Result<bool, QueueError> {
        self.inner.put(msg)
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().closed
    }

    /// Closes the queue on behalf of its owner; used by runtimes stopping an agent.
    pub fn close(&self) {
        let mut state = self.inner.lock();
        state.closed = true;
        state.entries.clear();
        drop(state);
        self.inner.available.notify_all();
    }
}

fn take_from(entries: &mut VecDeque<AclMessage>, template: Option<&MessageTemplate>) -> Option<AclMessage> {
    match template {
        None => entries.pop_front(),
        Some(t) => {
            let pos = entries.iter().position(|m| t.matches(m))?;
            entries.remove(pos)
        }
    }
}

impl fmt::Debug for MessageQueue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MessageQueue")
            .field("owner", &self.inner.owner)
            .field("limit", &self.inner.limit)
            .field("len", &self.len())
            .finish()
    }
}

impl fmt::Debug for QueueSender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QueueSender").field("owner", &self.inner.owner).finish()
    }
}
