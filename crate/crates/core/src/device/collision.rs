use serde::{Deserialize, Serialize};

use super::DeviceModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CollisionKind {
    Type1,
    Type3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionFlag {
    pub measured: usize,
    pub unitary: usize,
    pub kind: CollisionKind,
    /// |ω01(m) + δ_s − ω01(u)|, MHz.
    pub delta1: f64,
    /// |ω01(m) + δ_s − ω12(u)|, MHz.
    pub delta3: f64,
}

/// Thresholds in MHz; `max_distance` in graph hops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionConfig {
    pub delta_s: f64,
    pub type1_max: f64,
    pub type3_max: f64,
    pub max_distance: usize,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        Self { delta_s: -25.0, type1_max: 17.0, type3_max: 30.0, max_distance: 4 }
    }
}

/// Flags idle qubits near resonance with the Stark-shifted `measured` qubit.
/// A pair meeting both conditions yields two flags.
pub fn detect_collisions(device: &DeviceModel, measured: usize, cfg: &CollisionConfig) -> Vec<CollisionFlag> {
    let shifted = device.omega01[measured] + cfg.delta_s;
    let dist = device.distances_from(measured);
    let mut flags = Vec::new();
    for u in 0..device.n_qubits {
        if u == measured || !matches!(dist[u], Some(d) if d <= cfg.max_distance) {
            continue;
        }
        let delta1 = (shifted - device.omega01[u]).abs();
        let delta3 = (shifted - device.omega12[u]).abs();
        for (kind, hit) in [(CollisionKind::Type1, delta1 <= cfg.type1_max), (CollisionKind::Type3, delta3 <= cfg.type3_max)] {
            if hit {
                flags.push(CollisionFlag { measured, unitary: u, kind, delta1, delta3 });
            }
        }
    }
    flags
}

/// Flags for every qubit taken as the measured one.
pub fn detect_all_collisions(device: &DeviceModel, cfg: &CollisionConfig) -> Vec<CollisionFlag> {
    (0..device.n_qubits).flat_map(|m| detect_collisions(device, m, cfg)).collect()
}
