use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::AclError;

pub const MAX_AGENT_NAME_LEN: usize = 64;

/// Where an agent lives: a container reachable at `host:port`, or `local`
/// for agents that were never bound to a network address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContainerAddr {
    Local,
    Net { host: String, port: u16 },
}

impl ContainerAddr {
    pub fn net(host: impl Into<String>, port: u16) -> Self {
        ContainerAddr::Net { host: host.into(), port }
    }
}

impl fmt::Display for ContainerAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContainerAddr::Local => f.write_str("local"),
            ContainerAddr::Net { host, port } => write!(f, "{host}:{port}"),
        }
    }
}

impl FromStr for ContainerAddr {
    type Err = AclError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "local" {
            return Ok(ContainerAddr::Local);
        }
        let bad = || AclError::InvalidContainerAddr(s.to_string());
        let (host, port) = s.rsplit_once(':').ok_or_else(bad)?;
        if host.is_empty() || host.chars().any(|c| c == '@' || c.is_whitespace() || c.is_control()) {
            return Err(bad());
        }
        let port = port.parse::<u16>().map_err(|_| bad())?;
        Ok(ContainerAddr::Net { host: host.to_string(), port })
    }
}

impl Serialize for ContainerAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContainerAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl From<std::net::SocketAddr> for ContainerAddr {
    fn from(addr: std::net::SocketAddr) -> Self {
        ContainerAddr::Net { host: addr.ip().to_string(), port: addr.port() }
    }
}

/// Agent identifier, rendered as `name@host:port` or `name@local`.
///
/// Only the name takes part in routing decisions; the container part records
/// where the agent was started.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentId {
    name: String,
    container: ContainerAddr,
}

impl AgentId {
    pub fn new(name: impl Into<String>, container: ContainerAddr) -> Result<Self, AclError> {
        let name = name.into();
        validate_name(&name)?;
        Ok(AgentId { name, container })
    }

    pub fn local(name: impl Into<String>) -> Result<Self, AclError> {
        Self::new(name, ContainerAddr::Local)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn container(&self) -> &ContainerAddr {
        &self.container
    }
}

/// Non-empty, at most 64 characters, no control characters and no `@`.
pub fn validate_name(name: &str) -> Result<(), AclError> {
    let ok = !name.is_empty()
        && name.chars().count() <= MAX_AGENT_NAME_LEN
        && !name.chars().any(|c| c == '@' || c.is_control());
    if ok {
        Ok(())
    } else {
        Err(AclError::InvalidAgentName(name.to_string()))
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.container)
    }
}

impl FromStr for AgentId {
    type Err = AclError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, container) = s
            .split_once('@')
            .ok_or_else(|| AclError::InvalidAgentName(s.to_string()))?;
        AgentId::new(name, container.parse()?)
    }
}

impl Serialize for AgentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
