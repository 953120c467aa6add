use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Client settings remembered between runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientConfig {
    /// Last server connected to successfully.
    #[serde(default)]
    pub host: Option<String>,
    #[serde(default)]
    pub port: Option<u16>,
    /// Last user logged in.
    #[serde(default)]
    pub user_name: Option<String>,
    #[serde(default)]
    pub servers: Option<PathBuf>,
}

impl ClientConfig {
    /// `$AGENTMESH_CONFIG`, else `~/.config/agentmesh/client.json`.
    pub fn default_path() -> Option<PathBuf> {
        if let Some(p) = std::env::var_os("AGENTMESH_CONFIG") {
            return Some(PathBuf::from(p));
        }
        std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".config/agentmesh/client.json"))
    }

    /// A missing file yields the defaults.
    pub fn load(path: &Path) -> Result<ClientConfig, CliError> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ClientConfig::default()),
            Err(e) => Err(CliError::Config(format!("{}: {e}", path.display()))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let fail = |e: std::io::Error| CliError::Config(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(fail)?;
        }
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(fail)?;
        fs::rename(&tmp, path).map_err(fail)
    }

    pub fn last_server(&self) -> Option<(String, u16)> {
        Some((self.host.clone()?, self.port?))
    }
}
