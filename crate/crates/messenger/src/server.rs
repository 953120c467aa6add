use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use agentmesh_acl::{AclMessage, AgentId, Performative};
use agentmesh_platform::{AgentContext, Behavior, Container, PlatformConfig, PlatformError, ServiceEntry};
use agentmesh_sensitivity::Lexicon;
use agentmesh_store::{Store, StoreError, StoreOptions};
use serde_json::Value;
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::protocol::{Reply, Request, PUSH_CONVERSATION, SERVICE_DESCRIPTION, SERVICE_TYPE};
use crate::service::{ChatService, Liveness, Push, ServiceConfig};
use crate::ChatError;

/// Agent name of the chat manager.
pub const MANAGER_NAME: &str = "chat";
const POLL: Duration = Duration::from_millis(100);
const SWEEP_EVERY: Duration = Duration::from_secs(1);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub struct ServerConfig {
    pub platform: PlatformConfig,
    /// Store directory. `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub store_options: StoreOptions,
    pub lexicon: Lexicon,
    pub service: ServiceConfig,
    /// How often the manager runs its maintenance pass. `None` disables it.
    pub maintenance_interval: Option<Duration>,
    pub clock: Arc<dyn Clock>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            platform: PlatformConfig::default(),
            data_dir: None,
            store_options: StoreOptions::default(),
            lexicon: Lexicon::default(),
            service: ServiceConfig::default(),
            maintenance_interval: Some(Duration::from_secs(24 * 60 * 60)),
            clock: Arc::new(SystemClock),
        }
    }
}

struct CtxLiveness<'a>(&'a AgentContext);

impl Liveness for CtxLiveness<'_> {
    fn is_live(&self, agent: &str) -> bool {
        self.0.is_live(agent).unwrap_or(true)
    }
}

/// The chat manager's behavior: answers requests one at a time and pushes
/// the resulting events to client agents.
pub struct ChatManager {
    service: ChatService,
    last_sweep: Instant,
    maintenance: Option<(Duration, Instant)>,
}

impl ChatManager {
    pub fn new(service: ChatService, maintenance_interval: Option<Duration>) -> Self {
        ChatManager {
            service,
            last_sweep: Instant::now(),
            maintenance: maintenance_interval.map(|d| (d, Instant::now())),
        }
    }

    fn on_message(&mut self, ctx: &AgentContext, msg: AclMessage) {
        match msg.performative() {
            Performative::Request => {
                let request: Request = match serde_json::from_str(msg.content()) {
                    Ok(r) => r,
                    Err(e) => {
                        let reply = Reply::from_result(&Err(ChatError::BadRequest(e.to_string())));
                        ctx.send(msg.reply(ctx.id().clone(), Performative::NotUnderstood, reply.to_json()));
                        return;
                    }
                };
                let handled = self.service.handle(msg.sender().name(), &request, &CtxLiveness(ctx));
                let performative = match &handled.reply {
                    Ok(_) => Performative::Inform,
                    Err(e) if e.is_internal() => Performative::Failure,
                    Err(_) => Performative::Refuse,
                };
                if let Err(e) = &handled.reply {
                    log::debug!("{} from {} refused: {e}", request.op, msg.sender().name());
                }
                let content = Reply::from_result(&handled.reply).to_json();
                ctx.send(msg.reply(ctx.id().clone(), performative, content));
                self.deliver(ctx, handled.pushes);
            }
            Performative::NotUnderstood | Performative::Failure => {
                // A push to a vanished client bounces back from the platform.
                let gone = serde_json::from_str::<Value>(msg.content())
                    .ok()
                    .filter(|v| v["error"] == "UnknownAgent")
                    .and_then(|v| v["receiver"].as_str().and_then(|r| r.split('@').next()).map(str::to_string));
                if let Some(agent) = gone {
                    self.service.agent_gone(&agent);
                }
            }
            other => log::debug!("ignoring {other} from {}", msg.sender()),
        }
    }

    fn deliver(&mut self, ctx: &AgentContext, pushes: Vec<Push>) {
        for push in pushes {
            let Ok(to) = AgentId::local(push.agent.clone()) else { continue };
            let msg = AclMessage::new(Performative::Inform, ctx.id().clone(), vec![to], push.event.to_json())
                .expect("one receiver")
                .with_conversation_id(PUSH_CONVERSATION);
            let report = ctx.send(msg);
            if report.status(&push.agent) == Some(agentmesh_platform::DeliveryStatus::UnknownAgent) {
                self.service.agent_gone(&push.agent);
            }
        }
    }

    fn housekeeping(&mut self, ctx: &AgentContext) {
        if self.last_sweep.elapsed() >= SWEEP_EVERY {
            self.service.sweep_sessions(&CtxLiveness(ctx));
            self.last_sweep = Instant::now();
        }
        if let Some((every, last)) = &mut self.maintenance {
            if last.elapsed() >= *every {
                *last = Instant::now();
                match self.service.run_maintenance() {
                    Ok(r) => log::info!(
                        "maintenance: purged {} log entries, archived {:?}, unblocked {}",
                        r.purged_log_entries,
                        r.archived_groups,
                        r.auto_unblocked.len()
                    ),
                    Err(e) => log::error!("maintenance failed: {e}"),
                }
                let pushes = self.service.take_pushes();
                self.deliver(ctx, pushes);
            }
        }
    }
}

impl Behavior for ChatManager {
    fn step(&mut self, ctx: &AgentContext) {
        if let Some(msg) = ctx.receive_timeout(None, POLL) {
            self.on_message(ctx, msg);
        }
        self.housekeeping(ctx);
    }
}

/// A main container hosting the chat manager.
pub struct ChatServer {
    container: Container,
    manager: AgentId,
}

impl ChatServer {
    pub fn start(config: ServerConfig) -> Result<ChatServer, ServerError> {
        let store = match &config.data_dir {
            Some(dir) => Store::open_with(dir, config.store_options.clone())?,
            None => Store::in_memory(),
        };
        let container = Container::start_main(config.platform)?;
        let service = ChatService::new(store, config.lexicon, config.service, config.clock);
        let manager = container.spawn_agent(MANAGER_NAME, ChatManager::new(service, config.maintenance_interval))?;
        container.df_register(ServiceEntry::new(manager.clone(), SERVICE_TYPE, SERVICE_DESCRIPTION))?;
        log::info!("chat manager {manager} ready");
        Ok(ChatServer { container, manager })
    }

    pub fn address(&self) -> SocketAddr {
        self.container.main_address().expect("a chat server runs on a main container")
    }

    pub fn container(&self) -> &Container {
        &self.container
    }

    pub fn manager(&self) -> &AgentId {
        &self.manager
    }

    /// Stops every agent, which closes the store, and disconnects clients.
    pub fn shutdown(&self) {
        self.container.shutdown();
    }
}
