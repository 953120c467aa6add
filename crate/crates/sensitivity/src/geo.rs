use std::collections::HashMap;

use agentmesh_store::GeoPoint;
use serde::{Deserialize, Serialize};

use crate::SensitivityError;

/// Mean Earth radius used for all distances, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two points on a sphere of
/// radius [`EARTH_RADIUS_M`].
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let d_phi = phi2 - phi1;
    let d_lambda = (b.lon - a.lon).to_radians();
    let h = (d_phi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (d_lambda / 2.0).sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
}

/// A circular region that raises an event when a user walks into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geofence {
    pub label: String,
    pub center: GeoPoint,
    pub radius_m: f64,
}

impl Geofence {
    pub fn new(label: impl Into<String>, center: GeoPoint, radius_m: f64) -> Result<Self, SensitivityError> {
        let label = label.into();
        if !(radius_m > 0.0 && radius_m.is_finite()) {
            return Err(SensitivityError::InvalidFence(format!("radius {radius_m} must be positive")));
        }
        GeoPoint::new(center.lat, center.lon).map_err(|e| SensitivityError::InvalidFence(e.to_string()))?;
        Ok(Geofence { label, center, radius_m })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        haversine_distance(self.center, p) <= self.radius_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeofenceEvent {
    pub label: String,
    pub distance_m: f64,
}

/// Which fences one user is currently inside. Everyone starts outside.
#[derive(Debug, Clone, Default)]
pub struct FenceState {
    inside: HashMap<String, bool>,
}

impl FenceState {
    pub fn is_inside(&self, label: &str) -> bool {
        self.inside.get(label).copied().unwrap_or(false)
    }
}

/// Updates `state` with a new position and returns an enter event on an
/// outside-to-inside transition only.
pub fn geofence_check(state: &mut FenceState, fence: &Geofence, position: GeoPoint) -> Option<GeofenceEvent> {
    let distance_m = haversine_distance(fence.center, position);
    let now_inside = distance_m <= fence.radius_m;
    let was_inside = state.inside.insert(fence.label.clone(), now_inside).unwrap_or(false);
    (now_inside && !was_inside).then(|| GeofenceEvent { label: fence.label.clone(), distance_m })
}
