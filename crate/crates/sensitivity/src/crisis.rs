use std::collections::BTreeSet;
use std::io::BufRead;

use agentmesh_store::{GeoPoint, GroupRecord, Store, StoreError, Timestamp, UserRecord};
use serde::{Deserialize, Serialize};

use crate::geo::haversine_distance;
use crate::SensitivityError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrisisKind {
    Earthquake,
    Flood,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrisisAlert {
    pub alert_id: String,
    pub kind: CrisisKind,
    pub epicenter: GeoPoint,
    pub radius_m: f64,
    pub at: Timestamp,
}

impl CrisisAlert {
    pub fn validate(&self) -> Result<(), SensitivityError> {
        if self.alert_id.is_empty() || self.alert_id.chars().any(|c| c.is_control() || c.is_whitespace()) {
            return Err(SensitivityError::InvalidAlert(format!("bad alert id {:?}", self.alert_id)));
        }
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            return Err(SensitivityError::InvalidAlert(format!("radius {} must be positive", self.radius_m)));
        }
        GeoPoint::new(self.epicenter.lat, self.epicenter.lon)
            .map_err(|e| SensitivityError::InvalidAlert(e.to_string()))?;
        Ok(())
    }

    pub fn group_name(&self) -> String {
        crisis_group_name(&self.alert_id)
    }

    pub fn covers(&self, p: GeoPoint) -> bool {
        haversine_distance(self.epicenter, p) <= self.radius_m
    }
}

pub fn crisis_group_name(alert_id: &str) -> String {
    format!("crisis-{alert_id}")
}

/// Parses a JSON-lines alert feed. Blank lines are skipped; every other line
/// must be a valid alert.
pub fn read_alert_feed(reader: impl BufRead) -> Result<Vec<CrisisAlert>, SensitivityError> {
    let mut alerts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let alert: CrisisAlert = serde_json::from_str(&line)
            .map_err(|e| SensitivityError::MalformedAlert { line: i + 1, reason: e.to_string() })?;
        alert
            .validate()
            .map_err(|e| SensitivityError::MalformedAlert { line: i + 1, reason: e.to_string() })?;
        alerts.push(alert);
    }
    Ok(alerts)
}

/// Names of users with a known location inside the alert radius, sorted.
pub fn users_in_radius<'a>(alert: &CrisisAlert, users: impl IntoIterator<Item = &'a UserRecord>) -> Vec<String> {
    let mut names: Vec<String> = users
        .into_iter()
        .filter(|u| u.last_location.is_some_and(|p| alert.covers(p)))
        .map(|u| u.user_name.clone())
        .collect();
    names.sort();
    names
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrisisOutcome {
    pub group_name: String,
    /// Every member of the crisis group after the broadcast.
    pub members: Vec<String>,
    /// Users added by this call. Empty when the alert is replayed.
    pub added: Vec<String>,
}

/// Creates or reuses the alert's group and adds every in-radius user that is
/// not yet a member.
pub fn crisis_broadcast(store: &mut Store, alert: &CrisisAlert, now: Timestamp) -> Result<CrisisOutcome, SensitivityError> {
    alert.validate()?;
    let group_name = alert.group_name();
    let in_radius = users_in_radius(alert, store.users());
    let mut added = Vec::new();
    if store.group(&group_name).is_none() {
        let group = GroupRecord {
            group_name: group_name.clone(),
            members: in_radius.iter().cloned().collect::<BTreeSet<_>>(),
            created_at: now,
            archived_at: None,
        };
        store.create_group(group)?;
        added = in_radius;
    } else {
        for user in in_radius {
            match store.add_member(&group_name, &user) {
                Ok(()) => added.push(user),
                Err(StoreError::AlreadyMember { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    let members = store.group(&group_name).map(|g| g.members.iter().cloned().collect()).unwrap_or_default();
    log::info!("crisis {group_name}: {} added, {} members", added.len(), store.group(&group_name).map_or(0, |g| g.members.len()));
    Ok(CrisisOutcome { group_name, members, added })
}
