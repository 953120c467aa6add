use std::collections::{BTreeMap, BTreeSet};

use agentmesh_store::{Outcome, Store, Timestamp};
use serde::{Deserialize, Serialize};

use crate::phrases::{PhraseCount, PhraseModel};

/// Users with a known location that fall in one 1°×1° cell. The cell is
/// named by the floor of its south-west corner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoBucket {
    pub lat: i32,
    pub lon: i32,
    pub users: Vec<String>,
}

/// Usage statistics over the half-open window `[from, to)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageReport {
    pub from: Timestamp,
    pub to: Timestamp,
    /// Action-log entries per action name.
    pub operations: BTreeMap<String, u64>,
    /// The subset of `operations` that ended in an error.
    pub failures: BTreeMap<String, u64>,
    pub top_phrases: Vec<PhraseCount>,
    /// Locations of users who were active in the window.
    pub geo_buckets: Vec<GeoBucket>,
    /// Blocked user to block-reason category to count, for blocks placed in
    /// the window.
    pub block_reasons: BTreeMap<String, BTreeMap<String, u64>>,
}

impl UsageReport {
    pub fn is_empty(&self) -> bool {
        self.operations.is_empty() && self.top_phrases.is_empty() && self.geo_buckets.is_empty() && self.block_reasons.is_empty()
    }
}

pub fn geo_cell(lat: f64, lon: f64) -> (i32, i32) {
    (lat.floor() as i32, lon.floor() as i32)
}

/// Builds a report purely from the store's action log, messages, users and
/// blocks. A user counts as active when they sent a message or appear as the
/// user of an action-log entry inside the window.
pub fn usage_report(store: &Store, from: Timestamp, to: Timestamp, top_n: usize) -> UsageReport {
    let in_window = |t: Timestamp| from <= t && t < to;
    let mut report = UsageReport { from, to, ..Default::default() };
    let mut active = BTreeSet::new();

    for entry in store.actions().iter().filter(|e| in_window(e.at)) {
        *report.operations.entry(entry.action.clone()).or_insert(0) += 1;
        if entry.outcome == Outcome::Error {
            *report.failures.entry(entry.action.clone()).or_insert(0) += 1;
        }
        if let Some(u) = &entry.user {
            active.insert(u.clone());
        }
    }

    let window_msgs: Vec<&str> = store
        .messages()
        .filter(|m| in_window(m.sent_at))
        .map(|m| {
            active.insert(m.sender.clone());
            m.body.as_str()
        })
        .collect();
    report.top_phrases = PhraseModel::from_texts(window_msgs).top(top_n);

    let mut cells: BTreeMap<(i32, i32), Vec<String>> = BTreeMap::new();
    for name in &active {
        if let Some(p) = store.user(name).and_then(|u| u.last_location) {
            cells.entry(geo_cell(p.lat, p.lon)).or_default().push(name.clone());
        }
    }
    report.geo_buckets = cells.into_iter().map(|((lat, lon), users)| GeoBucket { lat, lon, users }).collect();

    for b in store.blocks().filter(|b| in_window(b.since)) {
        let category = b.reason.as_ref().map_or("unspecified", |r| r.category()).to_string();
        *report.block_reasons.entry(b.blocked.clone()).or_default().entry(category).or_insert(0) += 1;
    }
    report
}
