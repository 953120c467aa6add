//! Agent platform runtime.
//!
//! A platform is a star of [`Container`]s. The main container listens on TCP
//! and hosts the two platform agents: `ams`, the lifecycle authority that
//! owns the registry of agent names, and `df`, the directory where agents
//! publish the services they offer. Satellite containers attach to the main
//! container and relay every remote delivery through it.
//!
//! Agents are driven by a [`Behavior`] whose steps run serially on a
//! dedicated thread, each against the agent's private message queue.
//! Code outside the platform can take part through an [`ExternalAgent`].

mod agent;
mod config;
mod container;
mod error;
mod events;
mod link;
pub mod protocol;
mod registry;

pub use agent::{handler, AgentContext, Behavior, ExternalAgent};
pub use config::{AttachOptions, PlatformConfig};
pub use container::{Container, ContainerDescriptor, DeliveryReport, DeliveryStatus};
pub use error::PlatformError;
pub use events::{ContainerEvent, EventLog};
pub use protocol::PROTOCOL_VERSION;
pub use registry::{AgentState, AmsEntry, AmsRegistry, Directory, ServiceEntry};

/// Reserved name of the lifecycle authority agent.
pub const AMS_NAME: &str = "ams";
/// Reserved name of the directory facilitator agent.
pub const DF_NAME: &str = "df";
