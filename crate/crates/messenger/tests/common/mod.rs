#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use agentmesh_messenger::protocol::{ops, Request};
use agentmesh_messenger::{AlwaysLive, ChatError, ChatService, Handled, ManualClock, ServiceConfig};
use agentmesh_sensitivity::Lexicon;
use agentmesh_store::{ChatMessage, Store, Target};
use serde_json::{json, Value};

pub fn fast_config() -> ServiceConfig {
    ServiceConfig { pbkdf2_rounds: 1, admin_key: Some("k".into()), ..ServiceConfig::default() }
}

/// Drives a [`ChatService`] directly, one agent per user named after it.
pub struct Harness {
    pub svc: ChatService,
    pub clock: ManualClock,
    tokens: HashMap<String, String>,
}

impl Harness {
    pub fn new() -> Harness {
        Harness::with(Store::in_memory(), Lexicon::default())
    }

    pub fn with(store: Store, lexicon: Lexicon) -> Harness {
        let clock = ManualClock::new(1_000_000);
        let svc = ChatService::new(store, lexicon, fast_config(), Arc::new(clock.clone()));
        Harness { svc, clock, tokens: HashMap::new() }
    }

    pub fn open(dir: &Path) -> Harness {
        Harness::with(Store::open(dir).unwrap(), Lexicon::default())
    }

    pub fn raw(&mut self, agent: &str, op: &str, args: Value) -> Handled {
        self.clock.advance(1);
        self.svc.handle(agent, &Request::new(op, args), &AlwaysLive)
    }

    /// Calls `op` as logged-in `user`.
    pub fn call(&mut self, user: &str, op: &str, mut args: Value) -> Result<Value, ChatError> {
        if args.is_null() {
            args = json!({});
        }
        if let Some(t) = self.tokens.get(user) {
            args["token"] = json!(t);
        }
        self.raw(user, op, args).reply
    }

    pub fn register(&mut self, user: &str) {
        self.raw("guest-x", ops::REGISTER_USER, json!({"name": user, "password": "pass"})).reply.unwrap();
    }

    pub fn login(&mut self, user: &str) {
        let v = self.raw(user, ops::LOGIN_USER, json!({"name": user, "password": "pass"})).reply.unwrap();
        self.tokens.insert(user.to_string(), v["token"].as_str().unwrap().to_string());
    }

    pub fn token(&self, user: &str) -> String {
        self.tokens[user].clone()
    }

    pub fn user(&mut self, user: &str) {
        self.register(user);
        self.login(user);
    }

    pub fn send(&mut self, from: &str, target: Target, body: &str) -> Result<ChatMessage, ChatError> {
        self.call(from, ops::SEND_MESSAGE, json!({"target": target, "body": body}))
            .map(|v| serde_json::from_value(v).unwrap())
    }

    pub fn history(&mut self, user: &str, peer: Target, limit: usize) -> Vec<ChatMessage> {
        let v = self.call(user, ops::FETCH_HISTORY, json!({"peer": peer, "limit": limit})).unwrap();
        serde_json::from_value(v).unwrap()
    }
}

pub fn u(name: &str) -> Target {
    Target::User(name.into())
}

pub fn g(name: &str) -> Target {
    Target::Group(name.into())
}

pub fn code(r: Result<Value, ChatError>) -> &'static str {
    match r {
        Ok(v) => panic!("expected an error, got {v}"),
        Err(e) => e.code(),
    }
}
