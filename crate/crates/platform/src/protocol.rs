//! Container management and directory requests.
//!
//! Management traffic travels in ordinary ACL messages: a `request` whose
//! content is `{"verb": ..., "args": ...}`, answered by `inform` with
//! `{"ok": true, "value": ...}` or `refuse` with
//! `{"ok": false, "error": "<Name>", "detail": ...}`.
//!
//! Verbs addressed to `ams`: `attach`, `detach`, `spawn`, `kill`,
//! `heartbeat`, `containers`. Verbs addressed to `df`: `register`,
//! `deregister`, `search`.
//!
//! Deliveries between containers are `proxy` frames whose single receiver is
//! the target agent and whose content is the canonical payload of the
//! original message. The main container answers every frame a satellite
//! sends with exactly one reply, in order; for a proxy frame the reply value
//! is the delivery status of its target.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use agentmesh_acl::{AclMessage, Performative};

use crate::PlatformError;

pub const PROTOCOL_VERSION: &str = "agentmesh/1";

pub const VERB_ATTACH: &str = "attach";
pub const VERB_DETACH: &str = "detach";
pub const VERB_SPAWN: &str = "spawn";
pub const VERB_KILL: &str = "kill";
pub const VERB_HEARTBEAT: &str = "heartbeat";
pub const VERB_CONTAINERS: &str = "containers";
pub const VERB_REGISTER: &str = "register";
pub const VERB_DEREGISTER: &str = "deregister";
pub const VERB_SEARCH: &str = "search";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRequest {
    pub verb: String,
    #[serde(default)]
    pub args: Value,
}

impl ControlRequest {
    pub fn new(verb: &str, args: Value) -> Self {
        ControlRequest { verb: verb.to_string(), args }
    }

    pub fn to_content(&self) -> String {
        serde_json::to_string(self).expect("json value serializes")
    }

    pub fn parse(content: &str) -> Result<Self, PlatformError> {
        serde_json::from_str(content).map_err(|e| PlatformError::Protocol(format!("bad control request: {e}")))
    }

    pub fn str_arg(&self, key: &str) -> Result<&str, PlatformError> {
        self.args
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| PlatformError::Protocol(format!("{} needs string argument {key:?}", self.verb)))
    }
}

pub fn ok_content(value: Value) -> String {
    json!({"ok": true, "value": value}).to_string()
}

pub fn err_content(err: &PlatformError) -> String {
    json!({"ok": false, "error": err.code(), "detail": err.detail()}).to_string()
}

/// Performative for a reply carrying `result`.
pub fn reply_performative<T>(result: &Result<T, PlatformError>) -> Performative {
    match result {
        Ok(_) => Performative::Inform,
        Err(PlatformError::Io(_)) => Performative::Failure,
        Err(_) => Performative::Refuse,
    }
}

/// Decodes a management reply into its value or error.
pub fn parse_reply(msg: &AclMessage) -> Result<Value, PlatformError> {
    let v: Value = serde_json::from_str(msg.content())
        .map_err(|e| PlatformError::Protocol(format!("bad reply content: {e}")))?;
    if v.get("ok").and_then(Value::as_bool) == Some(true) {
        return Ok(v.get("value").cloned().unwrap_or(Value::Null));
    }
    let code = v.get("error").and_then(Value::as_str).unwrap_or("ProtocolError");
    let detail = v.get("detail").and_then(Value::as_str).unwrap_or("");
    Err(PlatformError::from_code(code, detail))
}
