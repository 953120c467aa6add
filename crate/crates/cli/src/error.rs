use agentmesh_messenger::ClientError;
use agentmesh_sensitivity::SensitivityError;
use thiserror::Error;

/// Process exit codes of the command-line tools.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONNECTION: i32 = 1;
    pub const PROTOCOL: i32 = 2;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("UnknownCommand: {0} (try `help`)")]
    UnknownCommand(String),
    #[error("usage: {0}")]
    Usage(&'static str),
    #[error("NotConnected: {0}")]
    NotConnected(&'static str),
    #[error("no server named {0} in the server list")]
    UnknownServer(String),
    #[error("cancelled")]
    Cancelled,
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
    #[error("config: {0}")]
    Config(String),
}

impl CliError {
    /// The exit code this error maps to when it ends a run; `OK` for
    /// errors a script may recover from.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Client(e) if e.is_protocol() => exit::PROTOCOL,
            CliError::Client(e) if e.is_connection() => exit::CONNECTION,
            _ => exit::OK,
        }
    }
}
