//! Simulated device: coupling graph, transition frequencies, timing constants
//! and noise parameters.

mod collision;
mod fixtures;
mod synth;

pub use collision::{detect_collisions, detect_all_collisions, CollisionConfig, CollisionFlag, CollisionKind};
pub use fixtures::{calibrated_chain, calibrated_chain10, chain30, ChainFixture};
pub use synth::{inject_collision, synthesize_device, SynthOptions, Topology};

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::Ns;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTiming {
    /// Gate name -> duration.
    pub durations: BTreeMap<String, Ns>,
    pub tau_m: Ns,
    pub tau_ff: Ns,
}

impl Default for DeviceTiming {
    fn default() -> Self {
        let mut durations = BTreeMap::new();
        for name in ["X", "Y", "Z", "H", "SX", "RZ", "RK"] {
            durations.insert(name.to_string(), 50);
        }
        durations.insert("CX".to_string(), 570);
        Self { durations, tau_m: 1000, tau_ff: 600 }
    }
}

impl DeviceTiming {
    pub fn gate_duration(&self, name: &str) -> Option<Ns> {
        self.durations.get(name).copied()
    }
}

/// Dynamics of a flagged measured/unitary pair while the measurement is on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionPair {
    pub measured: usize,
    pub unitary: usize,
    /// Detuning of the unitary qubit in the measured qubit's frame, MHz.
    pub delta_mhz: f64,
    /// Exchange coupling, MHz.
    pub j_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// `(measured, idle, rate)`: Z rotation rate on `idle` while `measured` is read out, rad/ns.
    #[serde(default)]
    pub zphase_rate: Vec<(usize, usize, f64)>,
    /// `(a, b, rate)`: always-on ZZ rotation rate between idle neighbours, rad/ns.
    #[serde(default)]
    pub zz_rate: Vec<(usize, usize, f64)>,
    /// Per-qubit assignment error probability.
    #[serde(default)]
    pub readout_error: Vec<f64>,
    #[serde(default)]
    pub collision_pairs: Vec<CollisionPair>,
    /// Depolarizing probability applied after every DD pulse.
    #[serde(default)]
    pub pulse_error: f64,
    /// Per-qubit stochastic dephasing rate, 1/ns. Empty means zero.
    #[serde(default)]
    pub t2_dephasing_rate: Vec<f64>,
}

impl NoiseParams {
    pub fn noiseless() -> Self {
        Self {
            zphase_rate: Vec::new(),
            zz_rate: Vec::new(),
            readout_error: Vec::new(),
            collision_pairs: Vec::new(),
            pulse_error: 0.0,
            t2_dephasing_rate: Vec::new(),
        }
    }

    pub fn readout(&self, q: usize) -> f64 {
        self.readout_error.get(q).copied().unwrap_or(0.0)
    }

    pub fn t2(&self, q: usize) -> f64 {
        self.t2_dephasing_rate.get(q).copied().unwrap_or(0.0)
    }

    pub fn zphase(&self, measured: usize, idle: usize) -> f64 {
        self.zphase_rate
            .iter()
            .find(|&&(m, u, _)| m == measured && u == idle)
            .map_or(0.0, |t| t.2)
    }

    /// True when every channel is deterministic (no stochastic sampling needed).
    pub fn is_coherent(&self) -> bool {
        self.pulse_error == 0.0 && self.t2_dephasing_rate.iter().all(|&r| r == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub n_qubits: usize,
    /// `(a, b, J in MHz)`
    pub edges: Vec<(usize, usize, f64)>,
    pub omega01: Vec<f64>,
    pub omega12: Vec<f64>,
    pub timing: DeviceTiming,
    pub noise: NoiseParams,
}

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid device: {0}")]
    Invalid(String),
}

impl DeviceModel {
    /// Noiseless linear chain with uniform frequencies spaced to avoid collisions.
    pub fn chain(n: usize) -> Self {
        let omega01: Vec<f64> = (0..n).map(|q| 4900.0 + 50.0 * (q % 5) as f64).collect();
        Self {
            n_qubits: n,
            edges: (1..n).map(|q| (q - 1, q, 2.0)).collect(),
            omega12: omega01.iter().map(|w| w - 320.0).collect(),
            omega01,
            timing: DeviceTiming::default(),
            noise: NoiseParams::noiseless(),
        }
    }

    pub fn neighbors(&self, q: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b, _)| if a == q { Some(b) } else if b == q { Some(a) } else { None })
            .collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.iter().any(|&(x, y, _)| (x == a && y == b) || (x == b && y == a))
    }

    /// Hop count, `None` when unreachable.
    pub fn graph_distance(&self, a: usize, b: usize) -> Option<usize> {
        self.distances_from(a)[b]
    }

    pub fn distances_from(&self, src: usize) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        let mut dist = vec![None; self.n_qubits];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn distance_matrix(&self) -> Vec<Vec<Option<usize>>> {
        (0..self.n_qubits).map(|q| self.distances_from(q)).collect()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_qubits];
        for &(a, b, _) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let n = self.n_qubits;
        let bad = |msg: String| Err(DeviceError::Invalid(msg));
        if self.omega01.len() != n || self.omega12.len() != n {
            return bad(format!("frequency lists must have {n} entries"));
        }
        if self.omega01.iter().chain(&self.omega12).any(|&w| !(w > 0.0)) {
            return bad("frequencies must be positive".into());
        }
        for (i, &(a, b, _)) in self.edges.iter().enumerate() {
            if a >= n || b >= n {
                return bad(format!("edge {i} references a missing qubit"));
            }
            if a == b {
                return bad(format!("edge {i} is a self loop"));
            }
            if self.edges[..i].iter().any(|&(x, y, _)| (x == a && y == b) || (x == b && y == a)) {
                return bad(format!("edge {i} duplicates ({a}, {b})"));
            }
        }
        if self.timing.tau_m == 0 || self.timing.tau_ff == 0 || self.timing.durations.values().any(|&d| d == 0) {
            return bad("timing constants must be strictly positive".into());
        }
        let noise = &self.noise;
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !noise.readout_error.iter().all(|&p| prob_ok(p)) || !prob_ok(noise.pulse_error) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        let rates = noise
            .zphase_rate
            .iter()
            .map(|t| t.2)
            .chain(noise.zz_rate.iter().map(|t| t.2))
            .chain(noise.t2_dephasing_rate.iter().copied());
        if rates.clone().any(|r| !(r >= 0.0)) {
            return bad("noise rates must be non-negative".into());
        }
        let idx_ok = noise.zphase_rate.iter().all(|&(m, u, _)| m < n && u < n)
            && noise.zz_rate.iter().all(|&(a, b, _)| a < n && b < n)
            && noise.collision_pairs.iter().all(|p| p.measured < n && p.unitary < n);
        if !idx_ok {
            return bad("noise parameters reference a missing qubit".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("device serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DeviceError> {
        let path_s = path.as_ref().display().to_string();
        let text = std::fs::read_to_string(&path).map_err(|source| DeviceError::Io { path: path_s.clone(), source })?;
        let device = Self::from_json(&text).map_err(|source| DeviceError::Parse { path: path_s, source })?;
        device.validate()?;
        Ok(device)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DeviceError> {
        let path_s = path.as_ref().display().to_string();
        std::fs::write(&path, self.to_json()).map_err(|source| DeviceError::Io { path: path_s, source })
    }
}
