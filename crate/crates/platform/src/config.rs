use std::time::Duration;

use agentmesh_acl::DEFAULT_QUEUE_LIMIT;

use crate::PROTOCOL_VERSION;

/// Main container settings.
#[derive(Debug, Clone)]
pub struct PlatformConfig {
    pub host: String,
    /// `0` picks a free port.
    pub port: u16,
    /// Platform name, reported in descriptors and logs.
    pub name: String,
    pub queue_limit: usize,
    /// Satellites are expected to send a heartbeat this often.
    pub heartbeat_interval: Duration,
    /// A satellite silent for this many intervals is declared dead.
    pub missed_heartbeats: u32,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            host: "127.0.0.1".into(),
            port: 1099,
            name: "agentmesh".into(),
            queue_limit: DEFAULT_QUEUE_LIMIT,
            heartbeat_interval: Duration::from_secs(5),
            missed_heartbeats: 3,
        }
    }
}

impl PlatformConfig {
    /// Loopback on an ephemeral port; handy for tests and embedding.
    pub fn ephemeral() -> Self {
        PlatformConfig { port: 0, ..Self::default() }
    }
}

/// Satellite settings used when attaching to a main container.
#[derive(Debug, Clone)]
pub struct AttachOptions {
    pub protocol_version: String,
    pub queue_limit: usize,
    pub heartbeat_interval: Duration,
    pub connect_timeout: Duration,
}

impl Default for AttachOptions {
    fn default() -> Self {
        AttachOptions {
            protocol_version: PROTOCOL_VERSION.into(),
            queue_limit: DEFAULT_QUEUE_LIMIT,
            heartbeat_interval: Duration::from_secs(5),
            connect_timeout: Duration::from_secs(5),
        }
    }
}
