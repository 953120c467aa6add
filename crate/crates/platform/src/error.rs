use agentmesh_acl::AclError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlatformError {
    #[error("port already in use: {0}")]
    PortInUse(String),
    #[error("main container unreachable at {0}")]
    MainUnreachable(String),
    #[error("handshake rejected: {0}")]
    HandshakeRejected(String),
    #[error("agent name already registered: {0}")]
    DuplicateName(String),
    #[error("container is no longer connected to the platform")]
    ContainerGone,
    #[error("unknown agent: {0}")]
    UnknownAgent(String),
    #[error("service {service_type:?} already registered by {provider}")]
    DuplicateService { provider: String, service_type: String },
    #[error("no service {service_type:?} registered by {provider}")]
    UnknownEntry { provider: String, service_type: String },
    #[error(transparent)]
    Acl(#[from] AclError),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl PlatformError {
    /// Stable name used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            PlatformError::PortInUse(_) => "PortInUse",
            PlatformError::MainUnreachable(_) => "MainUnreachable",
            PlatformError::HandshakeRejected(_) => "HandshakeRejected",
            PlatformError::DuplicateName(_) => "DuplicateName",
            PlatformError::ContainerGone => "ContainerGone",
            PlatformError::UnknownAgent(_) => "UnknownAgent",
            PlatformError::DuplicateService { .. } => "DuplicateService",
            PlatformError::UnknownEntry { .. } => "UnknownEntry",
            PlatformError::Acl(AclError::InvalidAgentName(_)) => "InvalidAgentName",
            PlatformError::Acl(_) => "AclError",
            PlatformError::Protocol(_) => "ProtocolError",
            PlatformError::Io(_) => "IoError",
        }
    }

    /// Rebuilds an error from its wire name and detail text.
    pub fn from_code(code: &str, detail: &str) -> PlatformError {
        let detail = detail.to_string();
        match code {
            "PortInUse" => PlatformError::PortInUse(detail),
            "MainUnreachable" => PlatformError::MainUnreachable(detail),
            "HandshakeRejected" => PlatformError::HandshakeRejected(detail),
            "DuplicateName" => PlatformError::DuplicateName(detail),
            "ContainerGone" => PlatformError::ContainerGone,
            "UnknownAgent" => PlatformError::UnknownAgent(detail),
            "DuplicateService" | "UnknownEntry" => {
                let (provider, service_type) = detail.split_once(' ').unwrap_or((detail.as_str(), ""));
                let (provider, service_type) = (provider.to_string(), service_type.to_string());
                if code == "DuplicateService" {
                    PlatformError::DuplicateService { provider, service_type }
                } else {
                    PlatformError::UnknownEntry { provider, service_type }
                }
            }
            "InvalidAgentName" => PlatformError::Acl(AclError::InvalidAgentName(detail)),
            "IoError" => PlatformError::Io(detail),
            _ => PlatformError::Protocol(format!("{code}: {detail}")),
        }
    }

    /// Detail text paired with [`code`](Self::code) on the wire.
    pub fn detail(&self) -> String {
        match self {
            PlatformError::PortInUse(s)
            | PlatformError::MainUnreachable(s)
            | PlatformError::HandshakeRejected(s)
            | PlatformError::DuplicateName(s)
            | PlatformError::UnknownAgent(s)
            | PlatformError::Protocol(s)
            | PlatformError::Io(s) => s.clone(),
            PlatformError::DuplicateService { provider, service_type }
            | PlatformError::UnknownEntry { provider, service_type } => format!("{provider} {service_type}"),
            PlatformError::Acl(AclError::InvalidAgentName(s)) => s.clone(),
            other => other.to_string(),
        }
    }
}

impl From<std::io::Error> for PlatformError {
    fn from(e: std::io::Error) -> Self {
        PlatformError::Io(e.to_string())
    }
}
