//! The messenger: a chat manager agent that keeps users, groups, blocks
//! and messages in a store and routes chat traffic between client agents.
//!
//! - [`ChatService`] holds the rules of every operation and can be driven
//!   directly, without a platform.
//! - [`ChatServer`] starts a main container and runs the service as the
//!   `chat` agent, registered in the directory under service type `chat`.
//! - [`ChatClient`] attaches a satellite container, finds the manager
//!   through the directory and wraps each operation.
//!
//! The JSON exchanged with the manager is described in [`protocol`].

mod client;
mod clock;
mod error;
pub mod password;
pub mod protocol;
mod server;
mod service;

pub use client::{ChatClient, ClientError, DEFAULT_TIMEOUT};
pub use clock::{Clock, ManualClock, SystemClock};
pub use error::ChatError;
pub use protocol::{Conversation, ConversationKind, Event, GroupView, LoginInfo, Notice, Presence, UserEntry, UserFilter};
pub use server::{ChatManager, ChatServer, ServerConfig, ServerError, MANAGER_NAME};
pub use service::{AlwaysLive, ChatService, Handled, Liveness, MaintenanceReport, PhraseIndex, Push, ServiceConfig};
