use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::SensitivityError;

/// A named server a client can pick instead of typing host and port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerEntry {
    pub display_name: String,
    pub host: String,
    pub port: u16,
}

/// Parses a `servers.json` document: a JSON array of entries with unique
/// display names, kept in file order.
pub fn parse_servers(text: &str) -> Result<Vec<ServerEntry>, SensitivityError> {
    let entries: Vec<ServerEntry> =
        serde_json::from_str(text).map_err(|e| SensitivityError::MalformedDirectory(e.to_string()))?;
    let mut seen = HashSet::new();
    for e in &entries {
        if e.display_name.trim().is_empty() || e.host.trim().is_empty() {
            return Err(SensitivityError::MalformedDirectory("empty display_name or host".into()));
        }
        if !seen.insert(e.display_name.as_str()) {
            return Err(SensitivityError::MalformedDirectory(format!("duplicate display_name {:?}", e.display_name)));
        }
    }
    Ok(entries)
}

/// Reads a server directory. A missing file is an empty directory.
pub fn list_servers(path: &Path) -> Result<Vec<ServerEntry>, SensitivityError> {
    match fs::read_to_string(path) {
        Ok(text) => parse_servers(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

pub fn find_server<'a>(entries: &'a [ServerEntry], display_name: &str) -> Option<&'a ServerEntry> {
    entries.iter().find(|e| e.display_name == display_name)
}
