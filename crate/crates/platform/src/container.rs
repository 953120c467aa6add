use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::io::ErrorKind;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Weak};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use agentmesh_acl::frame::{decode_payload, encode_payload, read_message, write_raw};
use agentmesh_acl::{AclMessage, AgentId, ContainerAddr, MessageQueue, Performative, QueueError, QueueSender};

use crate::agent::{AgentContext, Behavior, ExternalAgent};
use crate::events::{ContainerEvent, EventLog};
use crate::link::Link;
use crate::protocol::{self, ControlRequest};
use crate::registry::{AgentState, AmsEntry, AmsRegistry, Directory, ServiceEntry};
use crate::{AttachOptions, PlatformConfig, PlatformError, AMS_NAME, DF_NAME, PROTOCOL_VERSION};

const MAIN_ID: &str = "main";
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(5);
const CALL_TIMEOUT: Duration = Duration::from_secs(30);
const TICK: Duration = Duration::from_millis(50);

/// Snapshot of a container and the live agents it hosts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerDescriptor {
    pub container_id: String,
    pub address: ContainerAddr,
    pub is_main: bool,
    pub agents: BTreeSet<AgentId>,
}

impl ContainerDescriptor {
    pub fn agent_names(&self) -> BTreeSet<String> {
        self.agents.iter().map(|a| a.name().to_string()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryStatus {
    /// Enqueued at the receiver, or handed to the receiver's container.
    /// A full queue on another container is reported back to the sender
    /// with a `failure` message.
    Delivered,
    UnknownAgent,
    QueueFull,
}

/// Per-receiver outcome of one send.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeliveryReport {
    pub entries: Vec<(AgentId, DeliveryStatus)>,
}

impl DeliveryReport {
    pub fn all_delivered(&self) -> bool {
        self.entries.iter().all(|(_, s)| *s == DeliveryStatus::Delivered)
    }

    pub fn status(&self, name: &str) -> Option<DeliveryStatus> {
        self.entries.iter().find(|(id, _)| id.name() == name).map(|(_, s)| *s)
    }
}

struct LocalAgent {
    sender: QueueSender,
    stop: Arc<AtomicBool>,
    /// Waiting for the AMS to accept the name. Pending agents only receive
    /// deliveries the main container explicitly routes to this container.
    pending: bool,
    generation: u64,
}

struct SatLink {
    container_id: String,
    pseudo: AgentId,
    link: Link,
    last_seen: Mutex<Instant>,
}

struct MainState {
    ams: Mutex<AmsRegistry>,
    df: Mutex<Directory>,
    links: RwLock<HashMap<String, Arc<SatLink>>>,
    next_container: AtomicU64,
    listen_addr: SocketAddr,
    heartbeat_interval: Duration,
    missed_heartbeats: u32,
}

type Waiter = Option<mpsc::Sender<AclMessage>>;

struct Uplink {
    link: Link,
    pseudo: AgentId,
    /// One entry per frame sent to the main container, answered in order.
    pending: Mutex<VecDeque<Waiter>>,
    alive: AtomicBool,
}

enum Role {
    Main(MainState),
    Satellite(Uplink),
}

pub(crate) struct Node {
    container_id: String,
    address: ContainerAddr,
    queue_limit: usize,
    ams_id: AgentId,
    df_id: AgentId,
    agents: RwLock<HashMap<String, LocalAgent>>,
    next_generation: AtomicU64,
    role: Role,
    events: EventLog,
    threads: Mutex<Vec<JoinHandle<()>>>,
    closed: AtomicBool,
    me: Weak<Node>,
}

/// A running container: either the platform's main container or a
/// satellite attached to it. Dropping the handle shuts the container down.
pub struct Container {
    node: Arc<Node>,
}

impl Container {
    /// Starts a main container listening on `config.host:config.port`,
    /// with the `ams` and `df` agents registered.
    pub fn start_main(config: PlatformConfig) -> Result<Container, PlatformError> {
        let listener = TcpListener::bind((config.host.as_str(), config.port)).map_err(|e| {
            if e.kind() == ErrorKind::AddrInUse {
                PlatformError::PortInUse(format!("{}:{}", config.host, config.port))
            } else {
                PlatformError::Io(e.to_string())
            }
        })?;
        let listen_addr = listener.local_addr()?;
        let address = ContainerAddr::from(listen_addr);
        let ams_id = AgentId::new(AMS_NAME, address.clone())?;
        let df_id = AgentId::new(DF_NAME, address.clone())?;
        let node = Arc::new_cyclic(|me| Node {
            container_id: MAIN_ID.to_string(),
            address,
            queue_limit: config.queue_limit,
            ams_id,
            df_id,
            agents: RwLock::new(HashMap::new()),
            next_generation: AtomicU64::new(1),
            role: Role::Main(MainState {
                ams: Mutex::new(AmsRegistry::default()),
                df: Mutex::new(Directory::default()),
                links: RwLock::new(HashMap::new()),
                next_container: AtomicU64::new(1),
                listen_addr,
                heartbeat_interval: config.heartbeat_interval,
                missed_heartbeats: config.missed_heartbeats.max(1),
            }),
            events: EventLog::default(),
            threads: Mutex::new(Vec::new()),
            closed: AtomicBool::new(false),
            me: me.clone(),
        });
        log::info!("platform {:?} main container listening on {listen_addr}", config.name);

        node.spawn_agent(AMS_NAME, crate::agent::handler(ams_behavior))?;
        node.spawn_agent(DF_NAME, crate::agent::handler(df_behavior))?;

        let accept = {
            let node = Arc::clone(&node);
            thread::Builder::new()
                .name("main-accept".into())
                .spawn(move || accept_loop(node, listener))?
        };
        let monitor = {
            let node = Arc::clone(&node);
            thread::Builder::new()
                .name("main-heartbeat-monitor".into())
                .spawn(move || monitor_loop(node))?
        };
        node.threads.lock().extend([accept, monitor]);
        Ok(Container { node })
    }

    /// Attaches a satellite container to the main container at `main`.
    pub fn attach(main: impl ToSocketAddrs) -> Result<Container, PlatformError> {
        Self::attach_with(main, AttachOptions::default())
    }

    pub fn attach_with(main: impl ToSocketAddrs, options: AttachOptions) -> Result<Container, PlatformError> {
        let addrs: Vec<SocketAddr> = main
            .to_socket_addrs()
            .map_err(|e| PlatformError::MainUnreachable(e.to_string()))?
            .collect();
        let target = addrs.first().map(ToString::to_string).unwrap_or_default();
        let stream = addrs
            .iter()
            .find_map(|a| TcpStream::connect_timeout(a, options.connect_timeout).ok())
            .ok_or_else(|| PlatformError::MainUnreachable(target.clone()))?;
        stream.set_nodelay(true)?;
        let local = ContainerAddr::from(stream.local_addr()?);
        let main_addr = ContainerAddr::from(stream.peer_addr()?);

        let hello = AclMessage::new(
            Performative::Request,
            AgentId::new("container", local.clone())?,
            vec![AgentId::new(AMS_NAME, main_addr)?],
            ControlRequest::new(
                protocol::VERB_ATTACH,
                json!({"version": options.protocol_version, "address": local.to_string()}),
            )
            .to_content(),
        )?;
        let mut handshake = &stream;
        write_raw(&mut handshake, &encode_payload(&hello))?;
        stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT))?;
        let reply = read_message(&mut handshake)
            .map_err(|e| PlatformError::Protocol(format!("handshake: {e}")))?
            .ok_or_else(|| PlatformError::HandshakeRejected("connection closed during handshake".into()))?;
        stream.set_read_timeout(None)?;
        let value = protocol::parse_reply(&reply)?;
        let field = |k: &str| {
            value
                .get(k)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| PlatformError::Protocol(format!("attach reply lacks {k}")))
        };
        let container_id = field("container_id")?;
        let ams_id: AgentId = field("ams")?.parse()?;
        let df_id: AgentId = field("df")?.parse()?;
        let pseudo = AgentId::new(container_id.clone(), local.clone())?;

        let node = Arc::new_cyclic(|me| Node {
            container_id: container_id.clone(),
            address: local,
            queue_limit: options.queue_limit,
            ams_id,
            df_id,
            agents: RwLock::new(HashMap::new()),
            next_generation: AtomicU64::new(1),
            role: Role::Satellite(Uplink {
                link: Link::new(&stream).expect("cloning a connected socket"),
                pseudo,
                pending: Mutex::new(VecDeque::new()),
                alive: AtomicBool::new(true),
            }),
            events: EventLog::default(),
            threads: Mutex::new(Vec::new()),
            closed: AtomicBool::new(false),
            me: me.clone(),
        });
        node.events.push(ContainerEvent::Attached { container_id: container_id.clone() });
        log::info!("attached as {container_id}");

        let reader = {
            let node = Arc::clone(&node);
            thread::Builder::new()
                .name(format!("{container_id}-reader"))
                .spawn(move || satellite_read_loop(node, stream))?
        };
        let heartbeat = {
            let node = Arc::clone(&node);
            let interval = options.heartbeat_interval;
            thread::Builder::new()
                .name(format!("{container_id}-heartbeat"))
                .spawn(move || heartbeat_loop(node, interval))?
        };
        node.threads.lock().extend([reader, heartbeat]);
        Ok(Container { node })
    }

    pub fn container_id(&self) -> &str {
        &self.node.container_id
    }

    pub fn is_main(&self) -> bool {
        matches!(self.node.role, Role::Main(_))
    }

    /// Address of this container: the listening address for the main
    /// container, the local end of the uplink for a satellite.
    pub fn address(&self) -> &ContainerAddr {
        &self.node.address
    }

    /// The main container's listening socket address.
    pub fn main_address(&self) -> Option<SocketAddr> {
        match &self.node.role {
            Role::Main(m) => Some(m.listen_addr),
            Role::Satellite(_) => None,
        }
    }

    pub fn descriptor(&self) -> ContainerDescriptor {
        let agents = match &self.node.role {
            Role::Main(m) => m.ams.lock().live_on(MAIN_ID).into_iter().collect(),
            Role::Satellite(_) => self.node.local_ids().into_iter().collect(),
        };
        ContainerDescriptor {
            container_id: self.node.container_id.clone(),
            address: self.node.address.clone(),
            is_main: self.is_main(),
            agents,
        }
    }

    pub fn list_containers(&self) -> Result<Vec<ContainerDescriptor>, PlatformError> {
        self.node.list_containers()
    }

    pub fn spawn_agent(&self, name: &str, behavior: impl Behavior) -> Result<AgentId, PlatformError> {
        self.node.spawn_agent(name, behavior)
    }

    pub fn spawn_external(&self, name: &str) -> Result<ExternalAgent, PlatformError> {
        self.node.spawn_external(name)
    }

    pub fn kill_agent(&self, name: &str) -> Result<(), PlatformError> {
        self.node.kill_agent(name)
    }

    /// AMS record for `name`. Only the main container holds the registry.
    pub fn ams_entry(&self, name: &str) -> Option<AmsEntry> {
        match &self.node.role {
            Role::Main(m) => m.ams.lock().get(name).cloned(),
            Role::Satellite(_) => None,
        }
    }

    pub fn agent_state(&self, name: &str) -> Option<AgentState> {
        self.ams_entry(name).map(|e| e.state)
    }

    pub fn df_register(&self, entry: ServiceEntry) -> Result<(), PlatformError> {
        self.node.df_register(entry)
    }

    pub fn df_deregister(&self, provider: &AgentId, service_type: &str) -> Result<(), PlatformError> {
        self.node.df_deregister(provider.name(), service_type)
    }

    pub fn df_search(&self, service_type: &str) -> Result<Vec<ServiceEntry>, PlatformError> {
        self.node.df_search(service_type)
    }

    /// Routes `msg` as given, without rewriting its sender.
    pub fn route(&self, msg: AclMessage) -> DeliveryReport {
        self.node.route(msg)
    }

    pub fn events(&self) -> &EventLog {
        &self.node.events
    }

    /// False once a satellite has lost its main container, or after shutdown.
    pub fn is_connected(&self) -> bool {
        if self.node.closed.load(Ordering::Acquire) {
            return false;
        }
        match &self.node.role {
            Role::Main(_) => true,
            Role::Satellite(up) => up.alive.load(Ordering::Acquire),
        }
    }

    /// Main container: stops every agent, disconnects all satellites and
    /// closes the listener. Satellite: detaches from the platform.
    /// A second call is a no-op.
    pub fn shutdown(&self) {
        self.node.shutdown();
    }

    /// Drops a satellite's connection without detaching, as a crash would.
    pub fn abort(&self) {
        if let Role::Satellite(up) = &self.node.role {
            up.link.abort();
        }
    }
}

impl Drop for Container {
    fn drop(&mut self) {
        self.node.shutdown();
    }
}

impl Node {
    pub(crate) fn container_id(&self) -> &str {
        &self.container_id
    }

    pub(crate) fn ams_id(&self) -> &AgentId {
        &self.ams_id
    }

    pub(crate) fn df_id(&self) -> &AgentId {
        &self.df_id
    }

    fn arc(&self) -> Arc<Node> {
        self.me.upgrade().expect("node is alive while in use")
    }

    fn local_ids(&self) -> Vec<AgentId> {
        let mut ids: Vec<AgentId> = self
            .agents
            .read()
            .values()
            .filter(|a| !a.pending)
            .map(|a| a.sender.owner().clone())
            .collect();
        ids.sort();
        ids
    }

    fn local_sender(&self, name: &str, include_pending: bool) -> Option<QueueSender> {
        self.agents
            .read()
            .get(name)
            .filter(|a| include_pending || !a.pending)
            .map(|a| a.sender.clone())
    }

    // ---- lifecycle ----------------------------------------------------

    fn register_local(&self, name: &str) -> Result<(AgentContext, u64), PlatformError> {
        if self.closed.load(Ordering::Acquire) {
            return Err(PlatformError::ContainerGone);
        }
        if let Role::Satellite(up) = &self.role {
            if !up.alive.load(Ordering::Acquire) {
                return Err(PlatformError::ContainerGone);
            }
        }
        let id = AgentId::new(name, self.address.clone())?;
        let sink_node = self.me.clone();
        let queue = MessageQueue::with_reply_sink(
            id.clone(),
            self.queue_limit,
            Arc::new(move |reply: AclMessage| {
                if let Some(node) = sink_node.upgrade() {
                    node.route_detached(reply);
                }
            }),
        );
        let stop = Arc::new(AtomicBool::new(false));
        let generation = self.next_generation.fetch_add(1, Ordering::Relaxed);
        {
            let mut agents = self.agents.write();
            if agents.contains_key(name) {
                return Err(PlatformError::DuplicateName(name.to_string()));
            }
            agents.insert(
                name.to_string(),
                LocalAgent { sender: queue.sender(), stop: Arc::clone(&stop), pending: true, generation },
            );
        }

        let registered = match &self.role {
            Role::Main(m) => m.ams.lock().register(id.clone(), MAIN_ID, AgentState::Starting),
            Role::Satellite(_) => self
                .control_call(&self.ams_id, protocol::VERB_SPAWN, json!({"name": name}))
                .map(|_| ()),
        };
        if let Err(e) = registered {
            let mut agents = self.agents.write();
            if agents.get(name).map(|a| a.generation) == Some(generation) {
                agents.remove(name);
            }
            return Err(e);
        }
        if let Some(a) = self.agents.write().get_mut(name) {
            a.pending = false;
        }
        if let Role::Main(m) = &self.role {
            m.ams.lock().set_state(name, AgentState::Active);
        }
        self.events.push(ContainerEvent::AgentStarted { name: name.to_string() });
        Ok((AgentContext { id, queue, node: self.arc(), stop }, generation))
    }

    pub(crate) fn spawn_agent(&self, name: &str, behavior: impl Behavior) -> Result<AgentId, PlatformError> {
        let (ctx, generation) = self.register_local(name)?;
        let id = ctx.id.clone();
        let node = self.arc();
        let handle = thread::Builder::new()
            .name(format!("agent-{name}"))
            .spawn(move || run_agent(node, ctx, behavior, generation))?;
        let mut threads = self.threads.lock();
        threads.retain(|h| !h.is_finished());
        threads.push(handle);
        Ok(id)
    }

    pub(crate) fn spawn_external(&self, name: &str) -> Result<ExternalAgent, PlatformError> {
        let (ctx, _) = self.register_local(name)?;
        Ok(ExternalAgent { ctx })
    }

    /// Stops a local agent: its loop ends after the current step and its
    /// queue is discarded.
    fn stop_local(&self, name: &str) -> bool {
        let removed = self.agents.write().remove(name);
        match removed {
            Some(agent) => {
                agent.stop.store(true, Ordering::Release);
                agent.sender.close();
                self.events.push(ContainerEvent::AgentStopped { name: name.to_string() });
                true
            }
            None => false,
        }
    }

    fn agent_exited(&self, name: &str, generation: u64, stop: &AtomicBool) {
        let natural = !stop.swap(true, Ordering::AcqRel);
        {
            let mut agents = self.agents.write();
            if agents.get(name).map(|a| a.generation) == Some(generation) {
                if let Some(agent) = agents.remove(name) {
                    agent.sender.close();
                }
            }
        }
        if natural {
            self.events.push(ContainerEvent::AgentStopped { name: name.to_string() });
            match &self.role {
                Role::Main(m) => {
                    if m.ams.lock().stop(name).is_ok() {
                        m.df.lock().remove_provider(name);
                    }
                }
                Role::Satellite(_) => {
                    self.control_cast(&self.ams_id, protocol::VERB_KILL, json!({"name": name}));
                }
            }
        }
    }

    pub(crate) fn kill_agent(&self, name: &str) -> Result<(), PlatformError> {
        match &self.role {
            Role::Main(m) => {
                let entry = m.ams.lock().stop(name)?;
                m.df.lock().remove_provider(name);
                if entry.container_id == MAIN_ID {
                    self.stop_local(name);
                } else if let Some(link) = m.links.read().get(&entry.container_id) {
                    let note = self.control_message(
                        &link.pseudo,
                        protocol::VERB_KILL,
                        json!({"name": name}),
                    );
                    let _ = link.link.send(&note);
                }
                Ok(())
            }
            Role::Satellite(_) => {
                self.control_call(&self.ams_id, protocol::VERB_KILL, json!({"name": name}))?;
                // The main container's kill notice precedes its reply on the
                // uplink, so the local agent is already gone here.
                self.stop_local(name);
                Ok(())
            }
        }
    }

    fn shutdown(&self) {
        if self.closed.swap(true, Ordering::AcqRel) {
            return;
        }
        match &self.role {
            Role::Main(m) => {
                self.events.push(ContainerEvent::ShutDown);
                let links: Vec<Arc<SatLink>> = m.links.write().drain().map(|(_, l)| l).collect();
                for sl in links {
                    let note = self.control_message(&sl.pseudo, protocol::VERB_DETACH, json!({"reason": "shutdown"}));
                    let _ = sl.link.send(&note);
                    sl.link.close();
                }
                self.stop_all_local();
                {
                    let mut ams = m.ams.lock();
                    let names: Vec<String> = ams.iter().map(|e| e.id.name().to_string()).collect();
                    for n in names {
                        ams.set_state(&n, AgentState::Stopped);
                    }
                }
                // wake the accept loop so it drops the listener
                let _ = TcpStream::connect_timeout(&wake_addr(m.listen_addr), Duration::from_secs(1));
            }
            Role::Satellite(up) => {
                if up.alive.load(Ordering::Acquire) {
                    let _ = self.control_call(&self.ams_id, protocol::VERB_DETACH, json!({"reason": "detach"}));
                }
                self.stop_all_local();
                up.alive.store(false, Ordering::Release);
                up.link.close();
            }
        }
        self.join_threads();
        log::info!("container {} shut down", self.container_id);
    }

    fn stop_all_local(&self) {
        let names: Vec<String> = self.agents.read().keys().cloned().collect();
        for n in names {
            self.stop_local(&n);
        }
    }

    fn join_threads(&self) {
        let current = thread::current().id();
        let handles: Vec<JoinHandle<()>> = self.threads.lock().drain(..).collect();
        for h in handles {
            if h.thread().id() != current {
                let _ = h.join();
            }
        }
    }

    // ---- directory ----------------------------------------------------

    pub(crate) fn df_register(&self, entry: ServiceEntry) -> Result<(), PlatformError> {
        match &self.role {
            Role::Main(m) => {
                if m.ams.lock().live(entry.provider.name()).is_none() {
                    return Err(PlatformError::UnknownAgent(entry.provider.name().to_string()));
                }
                m.df.lock().register(entry)
            }
            Role::Satellite(_) => self
                .control_call(
                    &self.df_id,
                    protocol::VERB_REGISTER,
                    json!({
                        "provider": entry.provider.to_string(),
                        "service_type": entry.service_type,
                        "task_description": entry.task_description,
                    }),
                )
                .map(|_| ()),
        }
    }

    pub(crate) fn df_deregister(&self, provider: &str, service_type: &str) -> Result<(), PlatformError> {
        match &self.role {
            Role::Main(m) => m.df.lock().deregister(provider, service_type).map(|_| ()),
            Role::Satellite(_) => self
                .control_call(
                    &self.df_id,
                    protocol::VERB_DEREGISTER,
                    json!({"provider": provider, "service_type": service_type}),
                )
                .map(|_| ()),
        }
    }

    pub(crate) fn df_search(&self, service_type: &str) -> Result<Vec<ServiceEntry>, PlatformError> {
        match &self.role {
            Role::Main(m) => Ok(m.df.lock().search(service_type)),
            Role::Satellite(_) => {
                let v = self.control_call(&self.df_id, protocol::VERB_SEARCH, json!({"service_type": service_type}))?;
                serde_json::from_value(v).map_err(|e| PlatformError::Protocol(e.to_string()))
            }
        }
    }

    /// Whether an agent named `name` is currently live anywhere on the
    /// platform.
    pub(crate) fn is_live(&self, name: &str) -> Result<bool, PlatformError> {
        match &self.role {
            Role::Main(m) => Ok(m.ams.lock().live(name).is_some()),
            Role::Satellite(_) => Ok(self
                .list_containers()?
                .iter()
                .any(|c| c.agents.iter().any(|a| a.name() == name))),
        }
    }

    fn list_containers(&self) -> Result<Vec<ContainerDescriptor>, PlatformError> {
        match &self.role {
            Role::Main(m) => {
                let ams = m.ams.lock();
                let mut out = vec![ContainerDescriptor {
                    container_id: MAIN_ID.to_string(),
                    address: self.address.clone(),
                    is_main: true,
                    agents: ams.live_on(MAIN_ID).into_iter().collect(),
                }];
                let links = m.links.read();
                let mut ids: Vec<&String> = links.keys().collect();
                ids.sort();
                for id in ids {
                    let sl = &links[id];
                    out.push(ContainerDescriptor {
                        container_id: sl.container_id.clone(),
                        address: sl.pseudo.container().clone(),
                        is_main: false,
                        agents: ams.live_on(&sl.container_id).into_iter().collect(),
                    });
                }
                Ok(out)
            }
            Role::Satellite(_) => {
                let v = self.control_call(&self.ams_id, protocol::VERB_CONTAINERS, Value::Null)?;
                serde_json::from_value(v).map_err(|e| PlatformError::Protocol(e.to_string()))
            }
        }
    }

    // ---- routing ------------------------------------------------------

    /// Delivers `msg` to each of its receivers and reports per receiver.
    pub(crate) fn route(&self, msg: AclMessage) -> DeliveryReport {
        self.route_inner(msg, true)
    }

    /// Like [`route`](Self::route) but never waits on the main container;
    /// used for replies generated by the runtime itself.
    fn route_detached(&self, msg: AclMessage) {
        self.route_inner(msg, false);
    }

    fn route_inner(&self, msg: AclMessage, wait: bool) -> DeliveryReport {
        let mut seen = HashSet::new();
        let targets: Vec<AgentId> = msg
            .receivers()
            .iter()
            .filter(|r| seen.insert(r.name().to_string()))
            .cloned()
            .collect();
        let mut report = DeliveryReport::default();
        match &self.role {
            Role::Main(m) => {
                for target in targets {
                    let status = self.main_deliver(m, &msg, &target);
                    report.entries.push((target, status));
                }
            }
            Role::Satellite(up) => {
                let mut remote = Vec::new();
                for target in targets {
                    let local = self
                        .local_sender(target.name(), false)
                        .map(|s| put_status(&s, msg.clone()));
                    match local {
                        Some(Some(status)) => report.entries.push((target, status)),
                        _ => remote.push(target),
                    }
                }
                let mut waits = Vec::new();
                for target in remote {
                    let frame = proxy_frame(&msg, &target);
                    if wait {
                        match self.uplink_send(up, &frame, true) {
                            Ok(Some(rx)) => waits.push((target, Some(rx))),
                            _ => waits.push((target, None)),
                        }
                    } else {
                        let _ = self.uplink_send(up, &frame, false);
                        report.entries.push((target, DeliveryStatus::Delivered));
                    }
                }
                for (target, rx) in waits {
                    let status = rx
                        .and_then(|rx| rx.recv_timeout(CALL_TIMEOUT).ok())
                        .and_then(|reply| protocol::parse_reply(&reply).ok())
                        .and_then(|v| serde_json::from_value::<DeliveryStatus>(v).ok())
                        .unwrap_or(DeliveryStatus::UnknownAgent);
                    report.entries.push((target, status));
                }
            }
        }
        report
    }

    /// Main-container delivery of `msg` to one target.
    fn main_deliver(&self, m: &MainState, msg: &AclMessage, target: &AgentId) -> DeliveryStatus {
        let name = target.name();
        let status = if let Some(status) = self.local_sender(name, false).and_then(|s| put_status(&s, msg.clone())) {
            status
        } else {
            let location = m.ams.lock().live(name).map(|e| e.container_id.clone());
            match location {
                Some(c) if c == MAIN_ID => self
                    .local_sender(name, true)
                    .and_then(|s| put_status(&s, msg.clone()))
                    .unwrap_or(DeliveryStatus::UnknownAgent),
                Some(c) => {
                    let link = m.links.read().get(&c).cloned();
                    match link {
                        Some(l) if l.link.send(&proxy_frame(msg, target)).is_ok() => DeliveryStatus::Delivered,
                        _ => DeliveryStatus::UnknownAgent,
                    }
                }
                None => DeliveryStatus::UnknownAgent,
            }
        };
        if status == DeliveryStatus::UnknownAgent {
            self.not_understood(msg, target);
        }
        status
    }

    /// Tells the sender that `target` does not exist. Never answers
    /// failures or not-understood messages, so error replies cannot loop.
    fn not_understood(&self, msg: &AclMessage, target: &AgentId) {
        if matches!(msg.performative(), Performative::Failure | Performative::NotUnderstood) {
            return;
        }
        let content = json!({"error": "UnknownAgent", "receiver": target.to_string()}).to_string();
        self.route_detached(msg.reply(self.ams_id.clone(), Performative::NotUnderstood, content));
    }

    // ---- uplink (satellite) -------------------------------------------

    fn uplink(&self) -> Option<&Uplink> {
        match &self.role {
            Role::Satellite(up) => Some(up),
            Role::Main(_) => None,
        }
    }

    fn uplink_send(
        &self,
        up: &Uplink,
        msg: &AclMessage,
        want_reply: bool,
    ) -> Result<Option<mpsc::Receiver<AclMessage>>, PlatformError> {
        let mut pending = up.pending.lock();
        if !up.alive.load(Ordering::Acquire) {
            return Err(PlatformError::ContainerGone);
        }
        let (waiter, rx) = if want_reply {
            let (tx, rx) = mpsc::channel();
            (Some(tx), Some(rx))
        } else {
            (None, None)
        };
        pending.push_back(waiter);
        if let Err(e) = up.link.send(msg) {
            pending.pop_back();
            return Err(e);
        }
        Ok(rx)
    }

    fn control_message(&self, to: &AgentId, verb: &str, args: Value) -> AclMessage {
        let from = match &self.role {
            Role::Main(_) => self.ams_id.clone(),
            Role::Satellite(up) => up.pseudo.clone(),
        };
        AclMessage::new(Performative::Request, from, vec![to.clone()], ControlRequest::new(verb, args).to_content())
            .expect("control messages always have a receiver")
    }

    fn control_call(&self, to: &AgentId, verb: &str, args: Value) -> Result<Value, PlatformError> {
        let up = self.uplink().ok_or_else(|| PlatformError::Protocol("not a satellite".into()))?;
        let msg = self.control_message(to, verb, args);
        let rx = self.uplink_send(up, &msg, true)?.expect("reply requested");
        let reply = rx.recv_timeout(CALL_TIMEOUT).map_err(|_| PlatformError::ContainerGone)?;
        protocol::parse_reply(&reply)
    }

    fn control_cast(&self, to: &AgentId, verb: &str, args: Value) {
        if let Some(up) = self.uplink() {
            let msg = self.control_message(to, verb, args);
            let _ = self.uplink_send(up, &msg, false);
        }
    }

    fn uplink_lost(&self, reason: &str) {
        let Some(up) = self.uplink() else { return };
        if !up.alive.swap(false, Ordering::AcqRel) {
            return;
        }
        up.pending.lock().clear();
        self.stop_all_local();
        self.events.push(ContainerEvent::Disconnected { reason: reason.to_string() });
        log::info!("{} disconnected: {reason}", self.container_id);
    }

    // ---- main-side handling of satellite traffic ----------------------

    fn handle_satellite_frame(&self, m: &MainState, sl: &SatLink, msg: AclMessage) -> bool {
        *sl.last_seen.lock() = Instant::now();
        let (result, close): (Result<Value, PlatformError>, bool) = match msg.performative() {
            Performative::Proxy => (self.handle_proxy(m, &msg), false),
            Performative::Request if msg.sender().name() == sl.container_id => {
                match ControlRequest::parse(msg.content()) {
                    Ok(req) => {
                        let close = req.verb == protocol::VERB_DETACH;
                        (self.handle_control(m, sl, &req), close)
                    }
                    Err(e) => (Err(e), false),
                }
            }
            other => (Err(PlatformError::Protocol(format!("unexpected {other} frame on container link"))), false),
        };
        let performative = protocol::reply_performative(&result);
        let content = match &result {
            Ok(v) => protocol::ok_content(v.clone()),
            Err(e) => protocol::err_content(e),
        };
        let reply = AclMessage::new(performative, self.ams_id.clone(), vec![sl.pseudo.clone()], content)
            .expect("reply has a receiver");
        let _ = sl.link.send(&reply);
        close
    }

    fn handle_proxy(&self, m: &MainState, frame: &AclMessage) -> Result<Value, PlatformError> {
        let target = frame
            .receivers()
            .first()
            .cloned()
            .ok_or_else(|| PlatformError::Protocol("proxy without target".into()))?;
        let inner = decode_payload(frame.content().as_bytes())?;
        let status = self.main_deliver(m, &inner, &target);
        Ok(serde_json::to_value(status).expect("status serializes"))
    }

    fn handle_control(&self, m: &MainState, sl: &SatLink, req: &ControlRequest) -> Result<Value, PlatformError> {
        match req.verb.as_str() {
            protocol::VERB_HEARTBEAT | protocol::VERB_DETACH => Ok(Value::Null),
            protocol::VERB_SPAWN => {
                let name = req.str_arg("name")?;
                let id = AgentId::new(name, sl.pseudo.container().clone())?;
                m.ams.lock().register(id.clone(), &sl.container_id, AgentState::Active)?;
                Ok(Value::String(id.to_string()))
            }
            protocol::VERB_KILL => self.kill_agent(req.str_arg("name")?).map(|_| Value::Null),
            protocol::VERB_CONTAINERS => {
                let list = self.list_containers()?;
                Ok(serde_json::to_value(list).expect("descriptors serialize"))
            }
            protocol::VERB_REGISTER => {
                let provider: AgentId = req.str_arg("provider")?.parse()?;
                let entry = ServiceEntry::new(
                    provider,
                    req.str_arg("service_type")?,
                    req.args.get("task_description").and_then(Value::as_str).unwrap_or(""),
                );
                self.df_register(entry).map(|_| Value::Null)
            }
            protocol::VERB_DEREGISTER => self
                .df_deregister(req.str_arg("provider")?, req.str_arg("service_type")?)
                .map(|_| Value::Null),
            protocol::VERB_SEARCH => {
                let found = m.df.lock().search(req.str_arg("service_type")?);
                Ok(serde_json::to_value(found).expect("entries serialize"))
            }
            other => Err(PlatformError::Protocol(format!("unknown verb {other:?}"))),
        }
    }

    fn satellite_lost(&self, m: &MainState, container_id: &str) {
        m.links.write().remove(container_id);
        let agents = m.ams.lock().remove_container(container_id);
        {
            let mut df = m.df.lock();
            for a in &agents {
                df.remove_provider(a);
            }
        }
        log::info!("satellite {container_id} lost, deregistered {agents:?}");
        self.events.push(ContainerEvent::SatelliteLost { container_id: container_id.to_string(), agents });
    }
}

/// Outcome of a local put, or `None` if the agent's queue is already closed.
fn put_status(sender: &QueueSender, msg: AclMessage) -> Option<DeliveryStatus> {
    match sender.put(msg) {
        Ok(true) => Some(DeliveryStatus::Delivered),
        Ok(false) => Some(DeliveryStatus::QueueFull),
        Err(QueueError::Closed(_)) => None,
        Err(QueueError::WrongOwner(_)) => Some(DeliveryStatus::UnknownAgent),
    }
}

fn proxy_frame(msg: &AclMessage, target: &AgentId) -> AclMessage {
    let content = String::from_utf8(encode_payload(msg)).expect("payload is UTF-8 JSON");
    AclMessage::new(Performative::Proxy, msg.sender().clone(), vec![target.clone()], content)
        .expect("proxy frame has a receiver")
        .with_timestamp(msg.timestamp())
}

fn wake_addr(addr: SocketAddr) -> SocketAddr {
    match addr.ip() {
        IpAddr::V4(ip) if ip.is_unspecified() => SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), addr.port()),
        IpAddr::V6(ip) if ip.is_unspecified() => SocketAddr::new(IpAddr::V6(Ipv6Addr::LOCALHOST), addr.port()),
        _ => addr,
    }
}

fn run_agent(node: Arc<Node>, ctx: AgentContext, mut behavior: impl Behavior, generation: u64) {
    while !ctx.should_stop() && !behavior.done() {
        if catch_unwind(AssertUnwindSafe(|| behavior.step(&ctx))).is_err() {
            log::error!("agent {} panicked; stopping it", ctx.id);
            break;
        }
    }
    node.agent_exited(ctx.id.name(), generation, &ctx.stop);
}

fn accept_loop(node: Arc<Node>, listener: TcpListener) {
    for conn in listener.incoming() {
        if node.closed.load(Ordering::Acquire) {
            break;
        }
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let worker = Arc::clone(&node);
        let spawned = thread::Builder::new()
            .name("main-link".into())
            .spawn(move || serve_satellite(worker, stream));
        if let Ok(h) = spawned {
            let mut threads = node.threads.lock();
            threads.retain(|h| !h.is_finished());
            threads.push(h);
        }
    }
}

fn serve_satellite(node: Arc<Node>, stream: TcpStream) {
    let Role::Main(m) = &node.role else { return };
    let _ = stream.set_nodelay(true);
    let _ = stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT));
    let mut reader = &stream;
    let hello = match read_message(&mut reader) {
        Ok(Some(msg)) => msg,
        _ => return,
    };
    let refuse = |err: PlatformError| {
        if let Ok(reply) = AclMessage::new(
            Performative::Refuse,
            node.ams_id.clone(),
            vec![hello.sender().clone()],
            protocol::err_content(&err),
        ) {
            let mut w = &stream;
            let _ = write_raw(&mut w, &encode_payload(&reply));
        }
    };
    let req = match ControlRequest::parse(hello.content()) {
        Ok(r) if hello.performative() == Performative::Request && r.verb == protocol::VERB_ATTACH => r,
        _ => return refuse(PlatformError::HandshakeRejected("expected attach request".into())),
    };
    let version = req.args.get("version").and_then(Value::as_str).unwrap_or("");
    if version != PROTOCOL_VERSION {
        return refuse(PlatformError::HandshakeRejected(format!(
            "protocol version {version:?} is not {PROTOCOL_VERSION:?}"
        )));
    }
    if node.closed.load(Ordering::Acquire) {
        return refuse(PlatformError::HandshakeRejected("platform is shutting down".into()));
    }
    let address = req
        .args
        .get("address")
        .and_then(Value::as_str)
        .and_then(|a| a.parse::<ContainerAddr>().ok())
        .or_else(|| stream.peer_addr().ok().map(ContainerAddr::from))
        .unwrap_or(ContainerAddr::Local);
    let container_id = format!("container-{}", m.next_container.fetch_add(1, Ordering::Relaxed));
    let Ok(pseudo) = AgentId::new(container_id.clone(), address) else { return };
    let Ok(link) = Link::new(&stream) else { return };
    let sl = Arc::new(SatLink {
        container_id: container_id.clone(),
        pseudo: pseudo.clone(),
        link,
        last_seen: Mutex::new(Instant::now()),
    });
    let welcome = AclMessage::new(
        Performative::Inform,
        node.ams_id.clone(),
        vec![pseudo],
        protocol::ok_content(json!({
            "container_id": container_id,
            "ams": node.ams_id.to_string(),
            "df": node.df_id.to_string(),
        })),
    )
    .expect("welcome has a receiver");
    m.links.write().insert(container_id.clone(), Arc::clone(&sl));
    if sl.link.send(&welcome).is_err() {
        node.satellite_lost(m, &container_id);
        return;
    }
    node.events.push(ContainerEvent::SatelliteAttached { container_id: container_id.clone() });
    let _ = stream.set_read_timeout(None);

    loop {
        match read_message(&mut reader) {
            Ok(Some(msg)) => {
                if node.handle_satellite_frame(m, &sl, msg) {
                    sl.link.close();
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => {
                log::debug!("{container_id} link read error: {e}");
                break;
            }
        }
    }
    sl.link.abort();
    if !node.closed.load(Ordering::Acquire) {
        node.satellite_lost(m, &container_id);
    }
}

fn monitor_loop(node: Arc<Node>) {
    let Role::Main(m) = &node.role else { return };
    let deadline = m.heartbeat_interval * m.missed_heartbeats;
    let mut last_check = Instant::now();
    while !node.closed.load(Ordering::Acquire) {
        thread::sleep(TICK);
        if last_check.elapsed() < m.heartbeat_interval / 2 {
            continue;
        }
        last_check = Instant::now();
        let links: Vec<Arc<SatLink>> = m.links.read().values().cloned().collect();
        for sl in links {
            if sl.last_seen.lock().elapsed() > deadline {
                log::warn!("{} missed {} heartbeats, dropping it", sl.container_id, m.missed_heartbeats);
                sl.link.abort();
            }
        }
    }
}

fn heartbeat_loop(node: Arc<Node>, interval: Duration) {
    let mut last = Instant::now();
    loop {
        thread::sleep(TICK.min(interval));
        if node.closed.load(Ordering::Acquire) || !node.uplink().is_some_and(|u| u.alive.load(Ordering::Acquire)) {
            break;
        }
        if last.elapsed() >= interval {
            last = Instant::now();
            node.control_cast(&node.ams_id, protocol::VERB_HEARTBEAT, Value::Null);
        }
    }
}

fn satellite_read_loop(node: Arc<Node>, stream: TcpStream) {
    let Some(up) = node.uplink() else { return };
    let mut reader = &stream;
    let reason = loop {
        let msg = match read_message(&mut reader) {
            Ok(Some(msg)) => msg,
            Ok(None) => break "connection closed".to_string(),
            Err(e) => break format!("read error: {e}"),
        };
        match msg.performative() {
            Performative::Proxy => {
                let Some(target) = msg.receivers().first() else { continue };
                let Ok(inner) = decode_payload(msg.content().as_bytes()) else { continue };
                let delivered = node
                    .local_sender(target.name(), true)
                    .and_then(|s| put_status(&s, inner.clone()));
                if delivered.is_none() || delivered == Some(DeliveryStatus::UnknownAgent) {
                    node.not_understood(&inner, target);
                }
            }
            Performative::Request if msg.receivers().iter().any(|r| r.name() == up.pseudo.name()) => {
                match ControlRequest::parse(msg.content()) {
                    Ok(req) if req.verb == protocol::VERB_KILL => {
                        if let Ok(name) = req.str_arg("name") {
                            node.stop_local(name);
                        }
                    }
                    Ok(req) if req.verb == protocol::VERB_DETACH => {
                        let why = req.args.get("reason").and_then(Value::as_str).unwrap_or("detach");
                        node.uplink_lost(&format!("platform {why}"));
                    }
                    _ => log::warn!("ignoring unexpected request from main: {}", msg.content()),
                }
            }
            _ => {
                let waiter = up.pending.lock().pop_front();
                if let Some(Some(tx)) = waiter {
                    let _ = tx.send(msg);
                }
            }
        }
    };
    node.uplink_lost(&reason);
}

// ---- built-in platform agents ----------------------------------------

fn reply_to(ctx: &AgentContext, msg: &AclMessage, result: Result<Value, PlatformError>) {
    let performative = protocol::reply_performative(&result);
    let content = match &result {
        Ok(v) => protocol::ok_content(v.clone()),
        Err(e) => protocol::err_content(e),
    };
    ctx.send(msg.reply(ctx.id().clone(), performative, content));
}

fn platform_request(ctx: &AgentContext, msg: &AclMessage) -> Option<ControlRequest> {
    if msg.performative() != Performative::Request {
        if !matches!(msg.performative(), Performative::Failure | Performative::NotUnderstood) {
            let err = PlatformError::Protocol(format!("{} only accepts requests", ctx.id().name()));
            ctx.send(msg.reply(ctx.id().clone(), Performative::NotUnderstood, protocol::err_content(&err)));
        }
        return None;
    }
    match ControlRequest::parse(msg.content()) {
        Ok(req) => Some(req),
        Err(e) => {
            ctx.send(msg.reply(ctx.id().clone(), Performative::NotUnderstood, protocol::err_content(&e)));
            None
        }
    }
}

/// `ams` agent: answers `kill` and `containers` requests from agents.
fn ams_behavior(ctx: &AgentContext, msg: AclMessage) {
    let Some(req) = platform_request(ctx, &msg) else { return };
    let node = &ctx.node;
    let result = match req.verb.as_str() {
        protocol::VERB_KILL => req.str_arg("name").and_then(|n| node.kill_agent(n)).map(|_| Value::Null),
        protocol::VERB_CONTAINERS => node
            .list_containers()
            .map(|l| serde_json::to_value(l).expect("descriptors serialize")),
        other => Err(PlatformError::Protocol(format!("ams does not handle {other:?}"))),
    };
    reply_to(ctx, &msg, result);
}

/// `df` agent: the requester registers, deregisters or searches services.
fn df_behavior(ctx: &AgentContext, msg: AclMessage) {
    let Some(req) = platform_request(ctx, &msg) else { return };
    let node = &ctx.node;
    let provider = msg.sender().clone();
    let result = match req.verb.as_str() {
        protocol::VERB_REGISTER => req.str_arg("service_type").and_then(|t| {
            let desc = req.args.get("task_description").and_then(Value::as_str).unwrap_or("");
            node.df_register(ServiceEntry::new(provider.clone(), t, desc)).map(|_| Value::Null)
        }),
        protocol::VERB_DEREGISTER => req
            .str_arg("service_type")
            .and_then(|t| node.df_deregister(provider.name(), t))
            .map(|_| Value::Null),
        protocol::VERB_SEARCH => req
            .str_arg("service_type")
            .and_then(|t| node.df_search(t))
            .map(|found| serde_json::to_value(found).expect("entries serialize")),
        other => Err(PlatformError::Protocol(format!("df does not handle {other:?}"))),
    };
    reply_to(ctx, &msg, result);
}
