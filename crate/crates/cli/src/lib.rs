//! Command-line front ends of the messenger.
//!
//! - `chat`: the terminal client. Each verb maps to one chat manager
//!   operation; `--script` runs a file of commands for testing.
//! - `agentmesh-server`: a main container hosting the chat manager.
//! - `mesh-admin`: maintenance, reports and crisis alerts.
//!
//! The library holds the pieces the binaries share, so they can be tested
//! without spawning processes.

pub mod command;
pub mod config;
mod error;
pub mod render;
mod shell;
pub mod time;

pub use command::{parse_command, Command};
pub use config::ClientConfig;
pub use error::{exit, CliError};
pub use render::Renderer;
pub use shell::{Outcome, Shell};
