//! Agent communication primitives.
//!
//! This crate holds the pieces every other part of the platform speaks:
//!
//! - [`Performative`]: the 22 FIPA communicative acts.
//! - [`AgentId`]: a platform-unique agent name plus the address of its home container.
//! - [`AclMessage`]: the message envelope exchanged between agents.
//! - [`frame`]: the length-prefixed canonical JSON wire format.
//! - [`MessageQueue`]: the private, bounded FIFO every agent owns, with
//!   [`MessageTemplate`] filtering.

mod agent_id;
mod error;
pub mod frame;
mod message;
mod performative;
mod queue;

pub use agent_id::{AgentId, ContainerAddr, MAX_AGENT_NAME_LEN};
pub use error::AclError;
pub use frame::{decode_frame, encode_frame, MAX_FRAME_LEN};
pub use message::{now_millis, AclMessage};
pub use performative::Performative;
pub use queue::{MessageQueue, MessageTemplate, QueueError, QueueSender, ReplySink, DEFAULT_QUEUE_LIMIT};
