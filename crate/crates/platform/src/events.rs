use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Lifecycle events observed by a container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContainerEvent {
    /// This satellite completed its handshake.
    Attached { container_id: String },
    /// The main container accepted a satellite.
    SatelliteAttached { container_id: String },
    /// A satellite went away; its agents were deregistered.
    SatelliteLost { container_id: String, agents: Vec<String> },
    /// This satellite lost its connection to the main container.
    Disconnected { reason: String },
    AgentStarted { name: String },
    AgentStopped { name: String },
    /// The main container shut the platform down.
    ShutDown,
}

/// Append-only event history with blocking waits and push subscriptions.
#[derive(Default)]
pub struct EventLog {
    entries: Mutex<Vec<ContainerEvent>>,
    changed: Condvar,
    subscribers: Mutex<Vec<Sender<ContainerEvent>>>,
}

impl EventLog {
    pub fn push(&self, event: ContainerEvent) {
        log::debug!("container event {event:?}");
        self.subscribers
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .retain(|s| s.send(event.clone()).is_ok());
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).push(event);
        self.changed.notify_all();
    }

    pub fn snapshot(&self) -> Vec<ContainerEvent> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Receives every event pushed after this call.
    pub fn subscribe(&self) -> Receiver<ContainerEvent> {
        let (tx, rx) = mpsc::channel();
        self.subscribers.lock().unwrap_or_else(|e| e.into_inner()).push(tx);
        rx
    }

    /// Waits until some recorded event satisfies `pred`.
    pub fn wait_for(&self, timeout: Duration, pred: impl Fn(&ContainerEvent) -> bool) -> bool {
        let deadline = Instant::now() + timeout;
        let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if entries.iter().any(&pred) {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            entries = self
                .changed
                .wait_timeout(entries, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}
