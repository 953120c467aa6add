use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use agentmesh_sensitivity::{
    autocomplete_suggest, crisis_broadcast, evaluate_unblock, scan_and_auto_block, usage_report, CrisisAlert,
    Lexicon, LexiconReputation, PhraseModel, ReputationProvider, SensitivityError, DEFAULT_UNBLOCK_THRESHOLD,
};
use agentmesh_store::{
    ActionLogEntry, BlockReason, BlockRecord, ChatMessage, GeoPoint, GroupRecord, IndexReviewReport, NewMessage,
    Outcome, Store, StoreError, Target, Timestamp, UserRecord, UserStatus,
};
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clock::Clock;
use crate::password::{hash_password, verify_password, DEFAULT_ROUNDS};
use crate::protocol::{
    ops, Conversation, ConversationKind, Event, GroupView, LoginInfo, Notice, Presence, Request, UserEntry,
    UserFilter,
};
use crate::ChatError;

/// Name under which the chat manager records its actions.
const AGENT: &str = "chat";
/// Names users cannot take because platform agents use them.
const RESERVED_NAMES: [&str; 3] = ["ams", "df", "chat"];
pub const GUEST_PREFIX: &str = "guest-";
const CRISIS_PREFIX: &str = "crisis-";
const DAY_MS: u64 = 24 * 60 * 60 * 1000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub min_password_len: usize,
    pub max_body_bytes: usize,
    pub pbkdf2_rounds: u32,
    pub default_history_limit: usize,
    pub max_history_limit: usize,
    /// Required in the `admin_key` argument of admin operations. Admin
    /// operations are refused when unset.
    pub admin_key: Option<String>,
    pub unblock_threshold: f64,
    pub log_ttl: Duration,
    pub group_inactivity: Duration,
    pub index_window: Duration,
    pub top_phrases: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            min_password_len: 4,
            max_body_bytes: 64 * 1024,
            pbkdf2_rounds: DEFAULT_ROUNDS,
            default_history_limit: 50,
            max_history_limit: 1000,
            admin_key: None,
            unblock_threshold: DEFAULT_UNBLOCK_THRESHOLD,
            log_ttl: Duration::from_millis(30 * DAY_MS),
            group_inactivity: Duration::from_millis(180 * DAY_MS),
            index_window: Duration::from_millis(7 * DAY_MS),
            top_phrases: 20,
        }
    }
}

/// Answers whether a client agent still exists on the platform.
pub trait Liveness {
    fn is_live(&self, agent: &str) -> bool;
}

/// Everyone is live; for callers without a platform.
pub struct AlwaysLive;

impl Liveness for AlwaysLive {
    fn is_live(&self, _agent: &str) -> bool {
        true
    }
}

/// An event to deliver to a client agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Push {
    pub agent: String,
    pub event: Event,
}

#[derive(Debug)]
pub struct Handled {
    pub reply: Result<Value, ChatError>,
    pub pushes: Vec<Push>,
}

#[derive(Debug, Clone)]
struct Session {
    user: String,
    token: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaintenanceReport {
    pub purged_log_entries: usize,
    pub archived_groups: Vec<String>,
    pub index_review: IndexReviewReport,
    /// `(blocker, blocked)` pairs lifted by reputation.
    pub auto_unblocked: Vec<(String, String)>,
    pub phrases_built_from: u64,
}

/// The current phrase model, shared with readers. A rebuild replaces the
/// model in one step.
#[derive(Clone, Default)]
pub struct PhraseIndex(Arc<RwLock<Arc<PhraseModel>>>);

impl PhraseIndex {
    pub fn current(&self) -> Arc<PhraseModel> {
        self.0.read().expect("phrase lock").clone()
    }

    pub fn replace(&self, model: PhraseModel) {
        *self.0.write().expect("phrase lock") = Arc::new(model);
    }
}

/// Messenger operations over a [`Store`]. Calls are expected one at a time,
/// in arrival order.
pub struct ChatService {
    store: Store,
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    lexicon: Arc<Lexicon>,
    reputation: Box<dyn ReputationProvider>,
    phrases: PhraseIndex,
    sessions: HashMap<String, Session>,
    pushes: Vec<Push>,
}

fn parse<T: DeserializeOwned>(args: &Value) -> Result<T, ChatError> {
    let args = if args.is_null() { json!({}) } else { args.clone() };
    serde_json::from_value(args).map_err(|e| ChatError::BadRequest(e.to_string()))
}

fn to_value<T: Serialize>(v: T) -> Result<Value, ChatError> {
    serde_json::to_value(v).map_err(|e| ChatError::Internal(e.to_string()))
}

fn view(mut msg: ChatMessage) -> ChatMessage {
    msg.deleted_for.clear();
    msg
}

fn validate_group_name(name: &str) -> Result<(), ChatError> {
    let bad = name.is_empty()
        || name.chars().count() > 64
        || name.starts_with('#')
        || name.trim() != name
        || name.chars().any(char::is_control);
    if bad {
        return Err(ChatError::InvalidName(name.to_string()));
    }
    Ok(())
}

#[derive(Deserialize)]
struct Credentials {
    name: String,
    password: String,
}

#[derive(Deserialize)]
struct ListUsersArgs {
    #[serde(default = "default_filter")]
    filter: UserFilter,
    group: Option<String>,
}

fn default_filter() -> UserFilter {
    UserFilter::All
}

#[derive(Deserialize)]
struct KindArgs {
    kind: ConversationKind,
}

#[derive(Deserialize)]
struct GroupArgs {
    group: String,
}

#[derive(Deserialize)]
struct UserArgs {
    user: String,
}

#[derive(Deserialize)]
struct MemberArgs {
    user: String,
    group: String,
}

#[derive(Deserialize)]
struct BlockArgs {
    user: String,
    reason: Option<String>,
}

#[derive(Deserialize)]
struct HistoryArgs {
    peer: Target,
    limit: Option<usize>,
    before: Option<u64>,
}

#[derive(Deserialize)]
struct SendArgs {
    target: Target,
    body: String,
}

#[derive(Deserialize)]
struct MessageIdArgs {
    message_id: u64,
}

#[derive(Deserialize)]
struct PeerArgs {
    peer: String,
}

#[derive(Deserialize)]
struct PositionArgs {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct EnabledArgs {
    enabled: bool,
}

#[derive(Deserialize)]
struct SuggestArgs {
    prefix: String,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    5
}

#[derive(Deserialize)]
struct TtlArgs {
    ttl_ms: u64,
}

#[derive(Deserialize)]
struct InactivityArgs {
    inactivity_ms: u64,
}

#[derive(Deserialize)]
struct WindowArgs {
    window_ms: u64,
}

#[derive(Deserialize)]
struct ReportArgs {
    from: Timestamp,
    to: Timestamp,
    top: Option<usize>,
}

#[derive(Deserialize)]
struct AlertArgs {
    alert: CrisisAlert,
}

impl ChatService {
    pub fn new(store: Store, lexicon: Lexicon, config: ServiceConfig, clock: Arc<dyn Clock>) -> ChatService {
        let lexicon = Arc::new(lexicon);
        ChatService {
            store,
            config,
            clock,
            reputation: Box::new(LexiconReputation::new(lexicon.clone())),
            lexicon,
            phrases: PhraseIndex::default(),
            sessions: HashMap::new(),
            pushes: Vec::new(),
        }
    }

    pub fn with_reputation(mut self, provider: Box<dyn ReputationProvider>) -> Self {
        self.reputation = provider;
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn into_store(self) -> Store {
        self.store
    }

    pub fn phrases(&self) -> &PhraseIndex {
        &self.phrases
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// The user logged in through `agent`, if any.
    pub fn session_user(&self, agent: &str) -> Option<&str> {
        self.sessions.get(agent).map(|s| s.user.as_str())
    }

    fn agent_of(&self, user: &str) -> Option<&str> {
        self.sessions.iter().find(|(_, s)| s.user == user).map(|(a, _)| a.as_str())
    }

    /// Ends the session bound to `agent`, marking its user offline.
    pub fn agent_gone(&mut self, agent: &str) {
        if let Some(s) = self.sessions.remove(agent) {
            log::info!("session of {} ended", s.user);
            let _ = self.store.set_status(&s.user, UserStatus::Offline);
        }
    }

    /// Ends every session whose agent is no longer live.
    pub fn sweep_sessions(&mut self, live: &dyn Liveness) {
        let dead: Vec<String> = self.sessions.keys().filter(|a| !live.is_live(a)).cloned().collect();
        for agent in dead {
            self.agent_gone(&agent);
        }
    }

    pub fn handle(&mut self, agent: &str, request: &Request, live: &dyn Liveness) -> Handled {
        let now = self.clock.now();
        let reply = self.dispatch(agent, request, live, now);
        self.audit(agent, request, &reply, now);
        Handled { reply, pushes: std::mem::take(&mut self.pushes) }
    }

    fn audit(&mut self, agent: &str, request: &Request, reply: &Result<Value, ChatError>, now: Timestamp) {
        let outcome = if reply.is_ok() { Outcome::Ok } else { Outcome::Error };
        let mut entry = ActionLogEntry::new(now, AGENT, request.op.clone(), outcome);
        let user = self
            .session_user(agent)
            .map(str::to_string)
            .or_else(|| request.args.get("name").and_then(Value::as_str).map(str::to_string));
        if let Some(u) = user {
            entry = entry.with_user(u);
        }
        let mut detail = serde_json::Map::new();
        for key in ["group", "user"] {
            if let Some(v) = request.args.get(key).filter(|v| v.is_string()) {
                detail.insert(key.into(), v.clone());
            }
        }
        if let Err(e) = reply {
            detail.insert("error".into(), e.code().into());
        }
        if !detail.is_empty() {
            entry = entry.with_detail(Value::Object(detail).to_string());
        }
        if let Err(e) = self.store.log_action(entry) {
            log::warn!("action log write failed: {e}");
        }
    }

    fn caller(&self, agent: &str, args: &Value) -> Result<String, ChatError> {
        let session = self.sessions.get(agent).ok_or(ChatError::NotLoggedIn)?;
        match args.get("token").and_then(Value::as_str) {
            Some(t) if t == session.token => Ok(session.user.clone()),
            _ => Err(ChatError::NotLoggedIn),
        }
    }

    fn check_admin(&self, args: &Value) -> Result<(), ChatError> {
        let given = args.get("admin_key").and_then(Value::as_str);
        match (&self.config.admin_key, given) {
            (Some(k), Some(g)) if k.len() == g.len()
                && k.bytes().zip(g.bytes()).fold(0u8, |a, (x, y)| a | (x ^ y)) == 0 => Ok(()),
            _ => Err(ChatError::Forbidden),
        }
    }

    fn dispatch(&mut self, agent: &str, req: &Request, live: &dyn Liveness, now: Timestamp) -> Result<Value, ChatError> {
        let args = &req.args;
        let op = req.op.as_str();
        if ops::ADMIN.contains(&op) {
            self.check_admin(args)?;
            return self.admin(op, args, now);
        }
        match op {
            ops::REGISTER_USER => self.register_user(parse(args)?, now),
            ops::LOGIN_USER => self.login_user(agent, parse(args)?, live),
            _ => {
                let me = self.caller(agent, args)?;
                match op {
                    ops::LOGOUT => {
                        self.agent_gone(agent);
                        Ok(json!(true))
                    }
                    ops::LIST_USERS => self.list_users(&me, parse(args)?),
                    ops::LIST_CONVERSATIONS => self.list_conversations(&me, parse(args)?),
                    ops::LIST_GROUP_MEMBERS => self.list_group_members(&me, parse(args)?),
                    ops::FETCH_HISTORY => self.fetch_history(&me, parse(args)?),
                    ops::CREATE_GROUP => self.create_group(&me, parse(args)?, now),
                    ops::ADD_TO_GROUP => self.add_to_group(&me, parse(args)?),
                    ops::LEAVE_GROUP => self.leave_group(&me, parse(args)?),
                    ops::BLOCK_USER => self.block_user(&me, parse(args)?, now),
                    ops::UNBLOCK_USER => self.unblock_user(&me, parse(args)?),
                    ops::SEND_MESSAGE => self.send_message(&me, parse(args)?, now),
                    ops::DELETE_MESSAGE => self.delete_message(&me, parse(args)?),
                    ops::DELETE_CONVERSATION => self.delete_conversation(&me, parse(args)?),
                    ops::REPORT_POSITION => {
                        let p: PositionArgs = parse(args)?;
                        let at = GeoPoint::new(p.lat, p.lon)?;
                        self.store.set_location(&me, at)?;
                        Ok(json!(true))
                    }
                    ops::SET_AUTO_UNBLOCK => {
                        let a: EnabledArgs = parse(args)?;
                        self.store.set_auto_unblock(&me, a.enabled)?;
                        Ok(json!(true))
                    }
                    ops::SUGGEST => {
                        let a: SuggestArgs = parse(args)?;
                        let model = self.phrases.current();
                        autocomplete_suggest(&model, &a.prefix, a.k)
                            .map(|v| json!(v))
                            .map_err(|e| ChatError::BadRequest(e.to_string()))
                    }
                    other => Err(ChatError::UnknownOp(other.to_string())),
                }
            }
        }
    }

    // ---- accounts -------------------------------------------------------

    fn register_user(&mut self, c: Credentials, now: Timestamp) -> Result<Value, ChatError> {
        agentmesh_acl::AgentId::local(c.name.as_str()).map_err(|_| ChatError::InvalidName(c.name.clone()))?;
        let reserved = RESERVED_NAMES.contains(&c.name.as_str()) || c.name.starts_with(GUEST_PREFIX);
        if reserved || c.name.starts_with('#') || c.name.chars().any(char::is_whitespace) {
            return Err(ChatError::InvalidName(c.name));
        }
        if self.store.user(&c.name).is_some() {
            return Err(ChatError::DuplicateUserName);
        }
        if c.password.chars().count() < self.config.min_password_len {
            return Err(ChatError::WeakPassword(self.config.min_password_len));
        }
        let digest = hash_password(&c.password, self.config.pbkdf2_rounds);
        self.store.add_user(UserRecord::new(c.name.clone(), digest, now))?;
        Ok(json!({"user_name": c.name, "status": Presence::Offline}))
    }

    fn login_user(&mut self, agent: &str, c: Credentials, live: &dyn Liveness) -> Result<Value, ChatError> {
        let user = self.store.user(&c.name).ok_or_else(|| ChatError::UnknownUser(c.name.clone()))?;
        if !verify_password(&c.password, &user.password_digest) {
            return Err(ChatError::BadCredentials);
        }
        if agent != c.name {
            return Err(ChatError::AgentMismatch);
        }
        if let Some(existing) = self.agent_of(&c.name).map(str::to_string) {
            if live.is_live(&existing) {
                return Err(ChatError::AlreadyOnline(c.name));
            }
            self.agent_gone(&existing);
        }
        let mut raw = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut raw);
        let token = hex::encode(raw);
        self.sessions.insert(agent.to_string(), Session { user: c.name.clone(), token: token.clone() });
        self.store.set_status(&c.name, UserStatus::Online)?;
        to_value(LoginInfo { user_name: c.name, token })
    }

    fn presence_for(&self, viewer: &str, user: &UserRecord) -> Presence {
        if self.store.is_blocked(viewer, &user.user_name) {
            Presence::Hidden
        } else if user.status == UserStatus::Online {
            Presence::Online
        } else {
            Presence::Offline
        }
    }

    fn entry_for(&self, viewer: &str, user: &UserRecord) -> UserEntry {
        UserEntry { user_name: user.user_name.clone(), status: self.presence_for(viewer, user), reason: None }
    }

    fn list_users(&self, me: &str, a: ListUsersArgs) -> Result<Value, ChatError> {
        let entries: Vec<UserEntry> = match a.filter {
            UserFilter::All => self.store.users().map(|u| self.entry_for(me, u)).collect(),
            UserFilter::Blocked => self
                .store
                .blocks_by(me)
                .into_iter()
                .map(|b| UserEntry {
                    user_name: b.blocked.clone(),
                    status: Presence::Hidden,
                    reason: b.reason.as_ref().map(ToString::to_string),
                })
                .collect(),
            UserFilter::NotInGroup => {
                let g = a.group.ok_or_else(|| ChatError::BadRequest("filter not-in-group needs a group".into()))?;
                let group = self.store.group(&g).ok_or(ChatError::UnknownGroup(g))?;
                self.store
                    .users()
                    .filter(|u| !group.is_member(&u.user_name))
                    .map(|u| self.entry_for(me, u))
                    .collect()
            }
        };
        to_value(entries)
    }

    // ---- conversations --------------------------------------------------

    fn list_conversations(&self, me: &str, a: KindArgs) -> Result<Value, ChatError> {
        let mut convs: Vec<Conversation> = match a.kind {
            ConversationKind::Direct => self
                .store
                .direct_conversations(me)
                .into_iter()
                .map(|(peer, at)| Conversation { peer: Target::User(peer), last_message_at: at })
                .collect(),
            ConversationKind::Group => self
                .store
                .groups()
                .filter(|g| g.is_member(me))
                .map(|g| Conversation {
                    peer: Target::Group(g.group_name.clone()),
                    last_message_at: self.store.group_last_message(&g.group_name).unwrap_or(0).max(g.created_at),
                })
                .collect(),
        };
        convs.sort_by(|x, y| y.last_message_at.cmp(&x.last_message_at).then_with(|| x.peer.cmp(&y.peer)));
        to_value(convs)
    }

    fn member_group(&self, me: &str, name: &str) -> Result<&GroupRecord, ChatError> {
        let group = self.store.group(name).ok_or_else(|| ChatError::UnknownGroup(name.to_string()))?;
        if !group.is_member(me) {
            return Err(ChatError::NotAMember(name.to_string()));
        }
        Ok(group)
    }

    fn list_group_members(&self, me: &str, a: GroupArgs) -> Result<Value, ChatError> {
        let group = self.member_group(me, &a.group)?;
        let entries: Vec<UserEntry> = group
            .members
            .iter()
            .filter_map(|m| self.store.user(m))
            .map(|u| self.entry_for(me, u))
            .collect();
        to_value(entries)
    }

    fn fetch_history(&self, me: &str, a: HistoryArgs) -> Result<Value, ChatError> {
        match &a.peer {
            Target::User(u) if self.store.user(u).is_none() => return Err(ChatError::UnknownPeer(u.clone())),
            Target::Group(g) => {
                let group = self.store.group(g).ok_or_else(|| ChatError::UnknownPeer(g.clone()))?;
                if !group.is_member(me) {
                    return Err(ChatError::NotAMember(g.clone()));
                }
            }
            Target::User(_) => {}
        }
        let limit = a.limit.unwrap_or(self.config.default_history_limit).min(self.config.max_history_limit);
        let page: Vec<ChatMessage> = self.store.query_history(me, &a.peer, limit, a.before).into_iter().map(view).collect();
        to_value(page)
    }

    // ---- groups ---------------------------------------------------------

    fn create_group(&mut self, me: &str, a: GroupArgs, now: Timestamp) -> Result<Value, ChatError> {
        validate_group_name(&a.group)?;
        if a.group.starts_with(CRISIS_PREFIX) {
            return Err(ChatError::InvalidName(a.group));
        }
        if self.store.group(&a.group).is_some() {
            return Err(ChatError::DuplicateGroupName);
        }
        let group = GroupRecord::new(a.group.clone(), me, now);
        self.store.create_group(group.clone())?;
        to_value(GroupView { group_name: group.group_name, members: group.members.into_iter().collect(), created_at: now })
    }

    fn add_to_group(&mut self, me: &str, a: MemberArgs) -> Result<Value, ChatError> {
        let group = self.member_group(me, &a.group)?;
        let already = group.is_member(&a.user);
        if self.store.user(&a.user).is_none() {
            return Err(ChatError::UnknownUser(a.user));
        }
        if self.store.is_blocked(me, &a.user) {
            return Err(ChatError::TargetBlocked(a.user));
        }
        if already {
            return Err(ChatError::AlreadyMember(a.user));
        }
        self.store.add_member(&a.group, &a.user)?;
        self.push_to_user(&a.user, Event::Notice(Notice::AddedToGroup { group: a.group, by: me.to_string() }));
        Ok(json!(true))
    }

    fn leave_group(&mut self, me: &str, a: GroupArgs) -> Result<Value, ChatError> {
        self.member_group(me, &a.group)?;
        self.store.remove_member(&a.group, me)?;
        Ok(json!(true))
    }

    // ---- blocking -------------------------------------------------------

    fn block_user(&mut self, me: &str, a: BlockArgs, now: Timestamp) -> Result<Value, ChatError> {
        if self.store.user(&a.user).is_none() {
            return Err(ChatError::UnknownUser(a.user));
        }
        if a.user == me {
            return Err(ChatError::SelfBlock);
        }
        if self.store.is_blocked(me, &a.user) {
            return Err(ChatError::AlreadyBlocked(a.user));
        }
        let reason = a.reason.as_deref().map(str::trim).filter(|r| !r.is_empty()).map(BlockReason::from_user_text);
        self.store.add_block(BlockRecord { blocker: me.to_string(), blocked: a.user, reason, since: now })?;
        Ok(json!(true))
    }

    fn unblock_user(&mut self, me: &str, a: UserArgs) -> Result<Value, ChatError> {
        if !self.store.is_blocked(me, &a.user) {
            return Err(ChatError::NotBlocked(a.user));
        }
        self.store.remove_block(me, &a.user)?;
        Ok(json!(true))
    }

    // ---- messages -------------------------------------------------------

    fn push_to_user(&mut self, user: &str, event: Event) {
        if let Some(agent) = self.agent_of(user) {
            self.pushes.push(Push { agent: agent.to_string(), event });
        }
    }

    fn send_message(&mut self, me: &str, a: SendArgs, now: Timestamp) -> Result<Value, ChatError> {
        if a.body.len() > self.config.max_body_bytes {
            return Err(ChatError::BodyTooLarge(self.config.max_body_bytes));
        }
        let recipients: Vec<String> = match &a.target {
            Target::User(u) => {
                if self.store.user(u).is_none() {
                    return Err(ChatError::UnknownPeer(u.clone()));
                }
                if self.store.is_blocked(u, me) {
                    return Err(ChatError::BlockedByTarget(u.clone()));
                }
                if u == me {
                    Vec::new()
                } else {
                    vec![u.clone()]
                }
            }
            Target::Group(g) => {
                let group = self.store.group(g).ok_or_else(|| ChatError::UnknownPeer(g.clone()))?;
                if !group.is_member(me) {
                    return Err(ChatError::NotAMember(g.clone()));
                }
                let others = group.members.iter().filter(|m| *m != me).cloned().collect();
                self.store.reactivate_group(g)?;
                others
            }
        };
        let msg = self.store.append_message(NewMessage {
            sender: me.to_string(),
            target: a.target.clone(),
            body: a.body,
            sent_at: now,
        })?;
        for r in &recipients {
            self.push_to_user(r, Event::Message(view(msg.clone())));
        }
        self.apply_lexicon(&msg, now)?;
        to_value(view(msg))
    }

    fn apply_lexicon(&mut self, msg: &ChatMessage, now: Timestamp) -> Result<(), ChatError> {
        let members: Option<BTreeSet<String>> = match &msg.target {
            Target::Group(g) => self.store.group(g).map(|g| g.members.clone()),
            Target::User(_) => None,
        };
        let Some(action) = scan_and_auto_block(msg, &self.lexicon, members.as_ref()) else {
            return Ok(());
        };
        let mut blocked_by = Vec::new();
        for blocker in action.blockers {
            let record = BlockRecord {
                blocker: blocker.clone(),
                blocked: action.sender.clone(),
                reason: Some(BlockReason::Auto(action.token.clone())),
                since: now,
            };
            match self.store.add_block(record) {
                Ok(()) => blocked_by.push(blocker),
                Err(StoreError::AlreadyBlocked { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        if blocked_by.is_empty() {
            return Ok(());
        }
        log::info!("auto-block of {} by {:?} on {:?}", action.sender, blocked_by, action.token);
        self.push_to_user(
            &action.sender,
            Event::Notice(Notice::AutoBlock { message_id: msg.message_id, token: action.token, blocked_by }),
        );
        Ok(())
    }

    fn delete_message(&mut self, me: &str, a: MessageIdArgs) -> Result<Value, ChatError> {
        let msg = self.store.message(a.message_id).ok_or(ChatError::UnknownMessage(a.message_id))?;
        let members = match &msg.target {
            Target::Group(g) => self.store.group(g).map(|g| &g.members),
            Target::User(_) => None,
        };
        if !msg.is_participant(me, members) {
            return Err(ChatError::NotAParticipant(a.message_id));
        }
        self.store.delete_for(a.message_id, me)?;
        Ok(json!(true))
    }

    fn delete_conversation(&mut self, me: &str, a: PeerArgs) -> Result<Value, ChatError> {
        if self.store.user(&a.peer).is_none() {
            return Err(ChatError::UnknownPeer(a.peer));
        }
        let n = self.store.delete_conversation_for(me, &a.peer)?;
        Ok(json!({"deleted": n}))
    }

    // ---- admin and maintenance ------------------------------------------

    fn admin(&mut self, op: &str, args: &Value, now: Timestamp) -> Result<Value, ChatError> {
        match op {
            ops::PURGE_LOGS => {
                let a: TtlArgs = parse(args)?;
                Ok(json!({"purged": self.store.purge_expired_logs(now, a.ttl_ms)?}))
            }
            ops::ARCHIVE_GROUPS => {
                let a: InactivityArgs = parse(args)?;
                Ok(json!({"archived": self.store.archive_inactive_groups(now, a.inactivity_ms)?}))
            }
            ops::REVIEW_INDEXES => {
                let a: WindowArgs = parse(args)?;
                to_value(self.store.review_indexes(now, a.window_ms))
            }
            ops::BUILD_PHRASES => {
                let model = self.build_phrases();
                let top = model.top(self.config.top_phrases);
                let out = json!({"built_from": model.built_from, "phrases": model.counts.len(), "top": top});
                self.phrases.replace(model);
                Ok(out)
            }
            ops::USAGE_REPORT => {
                let a: ReportArgs = parse(args)?;
                to_value(usage_report(&self.store, a.from, a.to, a.top.unwrap_or(self.config.top_phrases)))
            }
            ops::INJECT_ALERT => {
                let a: AlertArgs = parse(args)?;
                to_value(self.inject_alert(&a.alert, now)?)
            }
            ops::RUN_MAINTENANCE => to_value(self.run_maintenance()?),
            other => Err(ChatError::UnknownOp(other.to_string())),
        }
    }

    pub fn build_phrases(&self) -> PhraseModel {
        PhraseModel::from_texts(self.store.messages().map(|m| m.body.as_str()))
    }

    /// Places users near the alert in its crisis group and notifies the
    /// ones newly added.
    pub fn inject_alert(&mut self, alert: &CrisisAlert, now: Timestamp) -> Result<agentmesh_sensitivity::CrisisOutcome, ChatError> {
        let outcome = crisis_broadcast(&mut self.store, alert, now).map_err(|e| match e {
            SensitivityError::InvalidAlert(m) => ChatError::BadRequest(m),
            SensitivityError::Store(s) => s.into(),
            other => ChatError::Internal(other.to_string()),
        })?;
        for user in &outcome.added {
            let notice = Notice::Crisis { group: outcome.group_name.clone(), alert: alert.clone() };
            self.push_to_user(user, Event::Notice(notice));
        }
        Ok(outcome)
    }

    /// Lifts blocks for opted-in blockers whose blocked users now score at
    /// or above the threshold.
    pub fn review_blocks(&mut self) -> Result<Vec<(String, String)>, ChatError> {
        let candidates: Vec<BlockRecord> = self
            .store
            .blocks()
            .filter(|b| self.store.user(&b.blocker).is_some_and(|u| u.auto_unblock))
            .cloned()
            .collect();
        let mut lifted = Vec::new();
        for b in candidates {
            let Some(blocker) = self.store.user(&b.blocker) else { continue };
            let decision = evaluate_unblock(blocker, &b.blocked, self.reputation.as_ref(), &self.store, self.config.unblock_threshold);
            match decision {
                Ok(Some(action)) => {
                    self.store.remove_block(&action.blocker, &action.blocked)?;
                    self.push_to_user(&action.blocked, Event::Notice(Notice::Unblocked { by: action.blocker.clone() }));
                    lifted.push((action.blocker, action.blocked));
                }
                Ok(None) => {}
                Err(SensitivityError::ProviderUnavailable(m)) => {
                    log::warn!("reputation provider unavailable: {m}");
                    return Err(ChatError::ProviderUnavailable);
                }
                Err(e) => return Err(ChatError::Internal(e.to_string())),
            }
        }
        Ok(lifted)
    }

    /// The periodic maintenance pass: purge old action-log entries,
    /// archive inactive groups, review indexes, re-evaluate opted-in
    /// blocks and rebuild the phrase model.
    pub fn run_maintenance(&mut self) -> Result<MaintenanceReport, ChatError> {
        let now = self.clock.now();
        let purged_log_entries = self.store.purge_expired_logs(now, self.config.log_ttl.as_millis() as u64)?;
        let archived_groups = self.store.archive_inactive_groups(now, self.config.group_inactivity.as_millis() as u64)?;
        let index_review = self.store.review_indexes(now, self.config.index_window.as_millis() as u64);
        let auto_unblocked = match self.review_blocks() {
            Ok(v) => v,
            Err(ChatError::ProviderUnavailable) => Vec::new(),
            Err(e) => return Err(e),
        };
        let model = self.build_phrases();
        let phrases_built_from = model.built_from;
        self.phrases.replace(model);
        Ok(MaintenanceReport { purged_log_entries, archived_groups, index_review, auto_unblocked, phrases_built_from })
    }

    /// Pushes produced outside of [`handle`](Self::handle), such as by
    /// maintenance.
    pub fn take_pushes(&mut self) -> Vec<Push> {
        std::mem::take(&mut self.pushes)
    }
}
