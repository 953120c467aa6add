use std::net::ToSocketAddrs;
use std::time::Duration;

use agentmesh_acl::{AclMessage, AgentId, MessageTemplate, Performative};
use agentmesh_platform::{AttachOptions, Container, ExternalAgent, PlatformError};
use agentmesh_sensitivity::CrisisAlert;
use agentmesh_store::{ChatMessage, Target};
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use thiserror::Error;

use crate::protocol::{
    ops, Conversation, ConversationKind, Event, GroupView, LoginInfo, Reply, Request, UserEntry, UserFilter,
    PUSH_CONVERSATION, SERVICE_TYPE,
};
use crate::service::GUEST_PREFIX;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error("no chat service registered on the platform")]
    ServiceNotFound,
    /// The chat manager refused the request or failed to carry it out.
    #[error("{code}: {detail}")]
    Service { code: String, detail: String },
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("not logged in")]
    NotLoggedIn,
}

impl ClientError {
    /// The service error code, if this is a service error.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Service { code, .. } => Some(code),
            _ => None,
        }
    }

    /// True for malformed or unexpected traffic from the server.
    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            ClientError::Protocol(_)
                | ClientError::Platform(PlatformError::Acl(_) | PlatformError::Protocol(_) | PlatformError::HandshakeRejected(_))
        )
    }

    /// True for errors of the connection rather than of a request.
    pub fn is_connection(&self) -> bool {
        !self.is_protocol()
            && matches!(self, ClientError::Platform(_) | ClientError::ServiceNotFound | ClientError::Timeout(_))
    }
}

fn guest_name() -> String {
    let mut raw = [0u8; 6];
    rand::thread_rng().fill_bytes(&mut raw);
    format!("{GUEST_PREFIX}{}", hex::encode(raw))
}

/// A client session with the chat manager.
///
/// The client owns an agent on a satellite container. Before login the
/// agent has a throwaway guest name; logging in replaces it with an agent
/// named after the user, so a user can be online only once on the platform.
pub struct ChatClient {
    agent: ExternalAgent,
    manager: AgentId,
    session: Option<LoginInfo>,
    next_request: u64,
    timeout: Duration,
    // Dropped last so the agents above can still deregister.
    container: Container,
}

impl ChatClient {
    /// Attaches a satellite to the platform at `addr` and finds the chat
    /// manager through the directory.
    pub fn connect(addr: impl ToSocketAddrs) -> Result<ChatClient, ClientError> {
        let options = AttachOptions { connect_timeout: Duration::from_secs(3), ..AttachOptions::default() };
        ChatClient::on_container(Container::attach_with(addr, options)?)
    }

    pub fn on_container(container: Container) -> Result<ChatClient, ClientError> {
        let agent = container.spawn_external(&guest_name())?;
        let manager = agent
            .df_search(SERVICE_TYPE)?
            .into_iter()
            .next()
            .map(|e| e.provider)
            .ok_or(ClientError::ServiceNotFound)?;
        Ok(ChatClient { agent, manager, session: None, next_request: 1, timeout: DEFAULT_TIMEOUT, container })
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    pub fn user(&self) -> Option<&str> {
        self.session.as_ref().map(|s| s.user_name.as_str())
    }

    pub fn agent_name(&self) -> &str {
        self.agent.id().name()
    }

    pub fn container(&self) -> &Container {
        &self.container
    }

    pub fn is_connected(&self) -> bool {
        self.container.is_connected()
    }

    /// Sends one request and waits for its reply. The session token is
    /// added to `args` when logged in.
    pub fn request(&mut self, op: &str, args: Value) -> Result<Value, ClientError> {
        let mut args = if args.is_null() { json!({}) } else { args };
        if let (Some(s), Some(obj)) = (&self.session, args.as_object_mut()) {
            obj.entry("token").or_insert_with(|| json!(s.token));
        }
        let conv = format!("req-{}", self.next_request);
        self.next_request += 1;
        let msg = AclMessage::new(
            Performative::Request,
            self.agent.id().clone(),
            vec![self.manager.clone()],
            Request::new(op, args).to_json(),
        )
        .expect("one receiver")
        .with_conversation_id(conv.clone())
        .with_reply_with(conv.clone());
        self.agent.send(msg);
        let reply = self
            .agent
            .receive_timeout(Some(&MessageTemplate::conversation(conv)), self.timeout)
            .ok_or(ClientError::Timeout(self.timeout))?;
        if reply.performative() == Performative::NotUnderstood && reply.sender().name() != self.manager.name() {
            return Err(ClientError::Protocol(format!("chat manager unreachable: {}", reply.content())));
        }
        let parsed: Reply = serde_json::from_str(reply.content()).map_err(|e| ClientError::Protocol(e.to_string()))?;
        if parsed.ok {
            Ok(parsed.value.unwrap_or(Value::Null))
        } else {
            Err(ClientError::Service {
                code: parsed.error.unwrap_or_else(|| "Unknown".into()),
                detail: parsed.detail.unwrap_or_default(),
            })
        }
    }

    fn call<T: DeserializeOwned>(&mut self, op: &str, args: Value) -> Result<T, ClientError> {
        let v = self.request(op, args)?;
        serde_json::from_value(v).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    /// Waits up to `timeout` for the next pushed event.
    pub fn next_event(&self, timeout: Duration) -> Option<Event> {
        let msg = self.agent.receive_timeout(Some(&MessageTemplate::conversation(PUSH_CONVERSATION)), timeout)?;
        match serde_json::from_str(msg.content()) {
            Ok(e) => Some(e),
            Err(e) => {
                log::warn!("unreadable event: {e}");
                None
            }
        }
    }

    /// Every event already waiting, without blocking.
    pub fn drain_events(&self) -> Vec<Event> {
        std::iter::from_fn(|| self.next_event(Duration::ZERO)).collect()
    }

    pub fn register(&mut self, name: &str, password: &str) -> Result<(), ClientError> {
        self.request(ops::REGISTER_USER, json!({"name": name, "password": password}))?;
        Ok(())
    }

    /// Logs in as `name` through a fresh agent named after the user.
    pub fn login(&mut self, name: &str, password: &str) -> Result<LoginInfo, ClientError> {
        if self.session.is_some() {
            self.logout()?;
        }
        let user_agent = match self.container.spawn_external(name) {
            Ok(a) => a,
            Err(PlatformError::DuplicateName(_)) => {
                return Err(ClientError::Service {
                    code: "AlreadyOnline".into(),
                    detail: format!("user {name} is already online"),
                })
            }
            Err(e) => return Err(e.into()),
        };
        let guest = std::mem::replace(&mut self.agent, user_agent);
        match self.call::<LoginInfo>(ops::LOGIN_USER, json!({"name": name, "password": password})) {
            Ok(info) => {
                drop(guest);
                self.session = Some(info.clone());
                Ok(info)
            }
            Err(e) => {
                self.agent = guest;
                Err(e)
            }
        }
    }

    /// Ends the session and returns to a guest agent.
    pub fn logout(&mut self) -> Result<(), ClientError> {
        if self.session.is_none() {
            return Err(ClientError::NotLoggedIn);
        }
        let result = self.request(ops::LOGOUT, Value::Null);
        self.session = None;
        self.agent = self.container.spawn_external(&guest_name())?;
        result.map(|_| ())
    }

    pub fn list_users(&mut self, filter: UserFilter, group: Option<&str>) -> Result<Vec<UserEntry>, ClientError> {
        self.call(ops::LIST_USERS, json!({"filter": filter, "group": group}))
    }

    pub fn list_conversations(&mut self, kind: ConversationKind) -> Result<Vec<Conversation>, ClientError> {
        self.call(ops::LIST_CONVERSATIONS, json!({"kind": kind}))
    }

    pub fn list_group_members(&mut self, group: &str) -> Result<Vec<UserEntry>, ClientError> {
        self.call(ops::LIST_GROUP_MEMBERS, json!({"group": group}))
    }

    pub fn fetch_history(&mut self, peer: &Target, limit: usize, before: Option<u64>) -> Result<Vec<ChatMessage>, ClientError> {
        self.call(ops::FETCH_HISTORY, json!({"peer": peer, "limit": limit, "before": before}))
    }

    pub fn create_group(&mut self, group: &str) -> Result<GroupView, ClientError> {
        self.call(ops::CREATE_GROUP, json!({"group": group}))
    }

    pub fn add_to_group(&mut self, user: &str, group: &str) -> Result<(), ClientError> {
        self.request(ops::ADD_TO_GROUP, json!({"user": user, "group": group})).map(|_| ())
    }

    pub fn leave_group(&mut self, group: &str) -> Result<(), ClientError> {
        self.request(ops::LEAVE_GROUP, json!({"group": group})).map(|_| ())
    }

    pub fn block_user(&mut self, user: &str, reason: Option<&str>) -> Result<(), ClientError> {
        self.request(ops::BLOCK_USER, json!({"user": user, "reason": reason})).map(|_| ())
    }

    pub fn unblock_user(&mut self, user: &str) -> Result<(), ClientError> {
        self.request(ops::UNBLOCK_USER, json!({"user": user})).map(|_| ())
    }

    pub fn send_message(&mut self, target: &Target, body: &str) -> Result<ChatMessage, ClientError> {
        self.call(ops::SEND_MESSAGE, json!({"target": target, "body": body}))
    }

    pub fn delete_message(&mut self, message_id: u64) -> Result<(), ClientError> {
        self.request(ops::DELETE_MESSAGE, json!({"message_id": message_id})).map(|_| ())
    }

    /// Returns how many messages were hidden.
    pub fn delete_conversation(&mut self, peer: &str) -> Result<u64, ClientError> {
        let v = self.request(ops::DELETE_CONVERSATION, json!({"peer": peer}))?;
        Ok(v["deleted"].as_u64().unwrap_or(0))
    }

    pub fn report_position(&mut self, lat: f64, lon: f64) -> Result<(), ClientError> {
        self.request(ops::REPORT_POSITION, json!({"lat": lat, "lon": lon})).map(|_| ())
    }

    pub fn set_auto_unblock(&mut self, enabled: bool) -> Result<(), ClientError> {
        self.request(ops::SET_AUTO_UNBLOCK, json!({"enabled": enabled})).map(|_| ())
    }

    pub fn suggest(&mut self, prefix: &str, k: usize) -> Result<Vec<String>, ClientError> {
        self.call(ops::SUGGEST, json!({"prefix": prefix, "k": k}))
    }

    /// Runs an admin operation with the server's admin key.
    pub fn admin(&mut self, op: &str, admin_key: &str, mut args: Value) -> Result<Value, ClientError> {
        if args.is_null() {
            args = json!({});
        }
        if let Some(obj) = args.as_object_mut() {
            obj.insert("admin_key".into(), json!(admin_key));
        }
        self.request(op, args)
    }

    pub fn inject_alert(&mut self, admin_key: &str, alert: &CrisisAlert) -> Result<Value, ClientError> {
        self.admin(ops::INJECT_ALERT, admin_key, json!({"alert": alert}))
    }
}
