use std::ops::Deref;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use agentmesh_acl::{AclMessage, AgentId, MessageQueue, MessageTemplate};

use crate::container::{DeliveryReport, Node};
use crate::{PlatformError, ServiceEntry};

/// How long [`handler`] behaviors wait for a message before re-checking
/// whether they were asked to stop.
const HANDLER_POLL: Duration = Duration::from_millis(100);

/// The step procedure of an agent.
///
/// The runtime calls `step` repeatedly on the agent's own thread until
/// `done` returns true or the agent is killed. Steps of one agent never run
/// concurrently.
pub trait Behavior: Send + 'static {
    fn step(&mut self, ctx: &AgentContext);

    fn done(&self) -> bool {
        false
    }
}

impl<F> Behavior for F
where
    F: FnMut(&AgentContext) + Send + 'static,
{
    fn step(&mut self, ctx: &AgentContext) {
        self(ctx)
    }
}

struct Handler<F> {
    on_message: F,
}

impl<F> Behavior for Handler<F>
where
    F: FnMut(&AgentContext, AclMessage) + Send + 'static,
{
    fn step(&mut self, ctx: &AgentContext) {
        if let Some(msg) = ctx.receive_timeout(None, HANDLER_POLL) {
            (self.on_message)(ctx, msg);
        }
    }
}

/// A cyclic behavior that hands every incoming message to `on_message`.
pub fn handler<F>(on_message: F) -> impl Behavior
where
    F: FnMut(&AgentContext, AclMessage) + Send + 'static,
{
    Handler { on_message }
}

/// What an agent sees of the platform: its identity, its queue, and
/// messaging and directory operations.
pub struct AgentContext {
    pub(crate) id: AgentId,
    pub(crate) queue: MessageQueue,
    pub(crate) node: Arc<Node>,
    pub(crate) stop: Arc<AtomicBool>,
}

impl AgentContext {
    pub fn id(&self) -> &AgentId {
        &self.id
    }

    pub fn container_id(&self) -> &str {
        self.node.container_id()
    }

    /// Sends `msg` as this agent. The sender field is overwritten and the
    /// timestamp refreshed.
    pub fn send(&self, msg: AclMessage) -> DeliveryReport {
        let mut msg = msg.with_sender(self.id.clone());
        msg.stamp();
        self.node.route(msg)
    }

    pub fn receive(&self, template: Option<&MessageTemplate>) -> Option<AclMessage> {
        self.queue.take(template)
    }

    pub fn receive_timeout(&self, template: Option<&MessageTemplate>, timeout: Duration) -> Option<AclMessage> {
        self.queue.take_timeout(template, timeout)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// True once the agent has been killed or its container is shutting down.
    pub fn should_stop(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }

    pub fn df_register(&self, service_type: &str, task_description: &str) -> Result<(), PlatformError> {
        self.node
            .df_register(ServiceEntry::new(self.id.clone(), service_type, task_description))
    }

    pub fn df_deregister(&self, service_type: &str) -> Result<(), PlatformError> {
        self.node.df_deregister(self.id.name(), service_type)
    }

    pub fn df_search(&self, service_type: &str) -> Result<Vec<ServiceEntry>, PlatformError> {
        self.node.df_search(service_type)
    }

    /// Whether an agent named `name` is live on any container. Satellites
    /// ask the main container.
    pub fn is_live(&self, name: &str) -> Result<bool, PlatformError> {
        self.node.is_live(name)
    }

    /// Identifier of the platform's `ams` agent.
    pub fn ams(&self) -> &AgentId {
        self.node.ams_id()
    }

    /// Identifier of the platform's `df` agent.
    pub fn df(&self) -> &AgentId {
        self.node.df_id()
    }
}

/// An agent driven by code outside the platform rather than by a behavior
/// thread. It is registered with the AMS like any other agent and is killed
/// when dropped.
pub struct ExternalAgent {
    pub(crate) ctx: AgentContext,
}

impl ExternalAgent {
    /// Kills the agent now instead of on drop.
    pub fn kill(&self) -> Result<(), PlatformError> {
        if self.ctx.stop.swap(true, Ordering::AcqRel) {
            return Ok(());
        }
        self.ctx.queue.close();
        self.ctx.node.kill_agent(self.ctx.id.name())
    }
}

impl Deref for ExternalAgent {
    type Target = AgentContext;

    fn deref(&self) -> &AgentContext {
        &self.ctx
    }
}

impl Drop for ExternalAgent {
    fn drop(&mut self) {
        let _ = self.kill();
    }
}
