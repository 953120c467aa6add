use std::collections::VecDeque;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::model::{ChatMessage, Target, Timestamp};

/// Identifies one conversation: an unordered user pair or a group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConvKey {
    Direct(String, String),
    Group(String),
}

impl ConvKey {
    pub fn direct(a: &str, b: &str) -> ConvKey {
        if a <= b {
            ConvKey::Direct(a.to_string(), b.to_string())
        } else {
            ConvKey::Direct(b.to_string(), a.to_string())
        }
    }

    pub fn of(msg: &ChatMessage) -> ConvKey {
        match &msg.target {
            Target::User(to) => ConvKey::direct(&msg.sender, to),
            Target::Group(g) => ConvKey::Group(g.clone()),
        }
    }

    /// The conversation `viewer` has with `peer`.
    pub fn between(viewer: &str, peer: &Target) -> ConvKey {
        match peer {
            Target::User(p) => ConvKey::direct(viewer, p),
            Target::Group(g) => ConvKey::Group(g.clone()),
        }
    }
}

impl fmt::Display for ConvKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvKey::Direct(a, b) => write!(f, "direct:{a}|{b}"),
            ConvKey::Group(g) => write!(f, "group:{g}"),
        }
    }
}

/// Location of one message in the segment files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct IndexEntry {
    pub sent_at: Timestamp,
    pub message_id: u64,
    pub segment: u32,
    pub offset: u64,
}

const HIT_HISTORY: usize = 4096;

/// Ordered entries of one conversation plus usage counters.
pub(crate) struct ConvIndex {
    pub entries: Vec<IndexEntry>,
    hits: Mutex<VecDeque<Timestamp>>,
    hits_total: AtomicU64,
}

impl ConvIndex {
    pub fn new(entries: Vec<IndexEntry>) -> Self {
        ConvIndex { entries, hits: Mutex::new(VecDeque::new()), hits_total: AtomicU64::new(0) }
    }

    pub fn record_hit(&self, at: Timestamp) {
        self.hits_total.fetch_add(1, Ordering::Relaxed);
        let mut hits = self.hits.lock().unwrap_or_else(|e| e.into_inner());
        if hits.len() == HIT_HISTORY {
            hits.pop_front();
        }
        hits.push_back(at);
    }

    pub fn hits_since(&self, since: Timestamp) -> u64 {
        let hits = self.hits.lock().unwrap_or_else(|e| e.into_inner());
        hits.iter().filter(|t| **t >= since).count() as u64
    }

    pub fn hits_total(&self) -> u64 {
        self.hits_total.load(Ordering::Relaxed)
    }

    /// Entries with `message_id < before`, newest first.
    pub fn newest_first(&self, before: Option<u64>) -> impl Iterator<Item = &IndexEntry> {
        let end = match before {
            Some(b) => self.entries.partition_point(|e| e.message_id < b),
            None => self.entries.len(),
        };
        self.entries[..end].iter().rev()
    }

    /// Carries usage counters over to a rebuilt index.
    pub fn with_entries(&self, entries: Vec<IndexEntry>) -> ConvIndex {
        let hits = self.hits.lock().unwrap_or_else(|e| e.into_inner()).clone();
        ConvIndex { entries, hits: Mutex::new(hits), hits_total: AtomicU64::new(self.hits_total()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// Not used by any query within the window.
    ZeroHits,
    /// Covers so much of the log that scanning would cost about the same.
    PoorSelectivity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexReview {
    pub key: String,
    pub entries: usize,
    /// Entries still pointing at messages someone can see.
    pub live_entries: usize,
    pub hits_in_window: u64,
    pub hits_total: u64,
    /// Share of the hot log this index covers.
    pub selectivity: f64,
    pub drop_candidate: Option<DropReason>,
    pub rebuilt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexReviewReport {
    pub reviewed_at: Timestamp,
    pub window_ms: u64,
    pub hot_messages: usize,
    pub indexes: Vec<IndexReview>,
}

impl IndexReviewReport {
    pub fn get(&self, key: &ConvKey) -> Option<&IndexReview> {
        let k = key.to_string();
        self.indexes.iter().find(|r| r.key == k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: u64) -> IndexEntry {
        IndexEntry { sent_at: id * 10, message_id: id, segment: 1, offset: id * 100 }
    }

    #[test]
    fn direct_key_is_unordered() {
        assert_eq!(ConvKey::direct("bob", "alice"), ConvKey::direct("alice", "bob"));
        assert_eq!(ConvKey::direct("bob", "alice").to_string(), "direct:alice|bob");
        assert_eq!(ConvKey::between("x", &Target::Group("g".into())).to_string(), "group:g");
    }

    #[test]
    fn newest_first_honours_cursor() {
        let idx = ConvIndex::new((1..=5).map(entry).collect());
        let all: Vec<u64> = idx.newest_first(None).map(|e| e.message_id).collect();
        assert_eq!(all, [5, 4, 3, 2, 1]);
        let page: Vec<u64> = idx.newest_first(Some(3)).map(|e| e.message_id).collect();
        assert_eq!(page, [2, 1]);
        assert_eq!(idx.newest_first(Some(1)).count(), 0);
    }

    #[test]
    fn hit_window() {
        let idx = ConvIndex::new(Vec::new());
        for t in [10, 20, 30] {
            idx.record_hit(t);
        }
        assert_eq!(idx.hits_since(15), 2);
        assert_eq!(idx.hits_total(), 3);
        let rebuilt = idx.with_entries(vec![entry(1)]);
        assert_eq!(rebuilt.hits_since(0), 3);
    }
}
