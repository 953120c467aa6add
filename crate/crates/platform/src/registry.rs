//! AMS name registry and DF service directory.

use std::collections::HashMap;

use agentmesh_acl::AgentId;
use serde::{Deserialize, Serialize};

use crate::PlatformError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentState {
    Starting,
    Active,
    Stopped,
}

impl AgentState {
    pub fn is_live(self) -> bool {
        matches!(self, AgentState::Starting | AgentState::Active)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmsEntry {
    pub id: AgentId,
    pub container_id: String,
    pub state: AgentState,
}

/// Platform-wide agent names. A name is taken while its entry is starting
/// or active; stopped names may be registered again.
#[derive(Debug, Default)]
pub struct AmsRegistry {
    entries: HashMap<String, AmsEntry>,
}

impl AmsRegistry {
    pub fn register(&mut self, id: AgentId, container_id: &str, state: AgentState) -> Result<(), PlatformError> {
        if let Some(existing) = self.entries.get(id.name()) {
            if existing.state.is_live() {
                return Err(PlatformError::DuplicateName(id.name().to_string()));
            }
        }
        self.entries.insert(
            id.name().to_string(),
            AmsEntry { id, container_id: container_id.to_string(), state },
        );
        Ok(())
    }

    pub fn set_state(&mut self, name: &str, state: AgentState) {
        if let Some(e) = self.entries.get_mut(name) {
            e.state = state;
        }
    }

    pub fn get(&self, name: &str) -> Option<&AmsEntry> {
        self.entries.get(name)
    }

    /// The live entry for `name`, if any.
    pub fn live(&self, name: &str) -> Option<&AmsEntry> {
        self.entries.get(name).filter(|e| e.state.is_live())
    }

    /// Marks a live agent stopped and returns its entry.
    pub fn stop(&mut self, name: &str) -> Result<AmsEntry, PlatformError> {
        match self.entries.get_mut(name) {
            Some(e) if e.state.is_live() => {
                e.state = AgentState::Stopped;
                Ok(e.clone())
            }
            _ => Err(PlatformError::UnknownAgent(name.to_string())),
        }
    }

    /// Drops every entry hosted by `container_id`, returning the live names removed.
    pub fn remove_container(&mut self, container_id: &str) -> Vec<String> {
        let mut live: Vec<String> = self
            .entries
            .values()
            .filter(|e| e.container_id == container_id && e.state.is_live())
            .map(|e| e.id.name().to_string())
            .collect();
        self.entries.retain(|_, e| e.container_id != container_id);
        live.sort();
        live
    }

    pub fn live_on(&self, container_id: &str) -> Vec<AgentId> {
        let mut ids: Vec<AgentId> = self
            .entries
            .values()
            .filter(|e| e.container_id == container_id && e.state.is_live())
            .map(|e| e.id.clone())
            .collect();
        ids.sort();
        ids
    }

    pub fn iter(&self) -> impl Iterator<Item = &AmsEntry> {
        self.entries.values()
    }
}

/// A service published in the directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceEntry {
    pub provider: AgentId,
    pub service_type: String,
    pub task_description: String,
}

impl ServiceEntry {
    pub fn new(provider: AgentId, service_type: impl Into<String>, task_description: impl Into<String>) -> Self {
        ServiceEntry { provider, service_type: service_type.into(), task_description: task_description.into() }
    }
}

/// Yellow-pages directory. Entries keep registration order and
/// `(provider name, service type)` pairs are unique.
#[derive(Debug, Default)]
pub struct Directory {
    entries: Vec<ServiceEntry>,
}

impl Directory {
    pub fn register(&mut self, entry: ServiceEntry) -> Result<(), PlatformError> {
        if self.position(entry.provider.name(), &entry.service_type).is_some() {
            return Err(PlatformError::DuplicateService {
                provider: entry.provider.name().to_string(),
                service_type: entry.service_type,
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn deregister(&mut self, provider: &str, service_type: &str) -> Result<ServiceEntry, PlatformError> {
        match self.position(provider, service_type) {
            Some(i) => Ok(self.entries.remove(i)),
            None => Err(PlatformError::UnknownEntry {
                provider: provider.to_string(),
                service_type: service_type.to_string(),
            }),
        }
    }

    pub fn search(&self, service_type: &str) -> Vec<ServiceEntry> {
        self.entries.iter().filter(|e| e.service_type == service_type).cloned().collect()
    }

    /// Removes every entry of `provider`; returns how many were dropped.
    pub fn remove_provider(&mut self, provider: &str) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| e.provider.name() != provider);
        before - self.entries.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn position(&self, provider: &str, service_type: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.provider.name() == provider && e.service_type == service_type)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> AgentId {
        AgentId::local(s).unwrap()
    }

    #[test]
    fn live_names_are_unique_stopped_names_reusable() {
        let mut ams = AmsRegistry::default();
        ams.register(id("alice"), "main", AgentState::Active).unwrap();
        assert_eq!(
            ams.register(id("alice"), "container-1", AgentState::Active),
            Err(PlatformError::DuplicateName("alice".into()))
        );
        ams.stop("alice").unwrap();
        assert_eq!(ams.get("alice").unwrap().state, AgentState::Stopped);
        ams.register(id("alice"), "container-1", AgentState::Active).unwrap();
        assert_eq!(ams.live("alice").unwrap().container_id, "container-1");
    }

    #[test]
    fn stop_unknown_or_stopped_fails() {
        let mut ams = AmsRegistry::default();
        assert!(matches!(ams.stop("ghost"), Err(PlatformError::UnknownAgent(_))));
        ams.register(id("a"), "main", AgentState::Active).unwrap();
        ams.stop("a").unwrap();
        assert!(matches!(ams.stop("a"), Err(PlatformError::UnknownAgent(_))));
    }

    #[test]
    fn remove_container_only_touches_that_container() {
        let mut ams = AmsRegistry::default();
        ams.register(id("a"), "c1", AgentState::Active).unwrap();
        ams.register(id("b"), "c2", AgentState::Active).unwrap();
        ams.register(id("c"), "c1", AgentState::Active).unwrap();
        assert_eq!(ams.remove_container("c1"), vec!["a".to_string(), "c".to_string()]);
        assert!(ams.get("a").is_none());
        assert!(ams.live("b").is_some());
    }

    #[test]
    fn directory_register_search_deregister() {
        let mut df = Directory::default();
        assert!(df.search("chat").is_empty());
        df.register(ServiceEntry::new(id("cm"), "chat", "messenger")).unwrap();
        assert!(matches!(
            df.register(ServiceEntry::new(id("cm"), "chat", "again")),
            Err(PlatformError::DuplicateService { .. })
        ));
        df.register(ServiceEntry::new(id("cm"), "mining", "phrases")).unwrap();
        df.deregister("cm", "chat").unwrap();
        assert!(matches!(df.deregister("cm", "chat"), Err(PlatformError::UnknownEntry { .. })));
        assert!(df.search("chat").is_empty());
        assert_eq!(df.search("mining").len(), 1);
        assert!(df.search("nothing").is_empty());
    }
}
