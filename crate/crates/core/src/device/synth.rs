use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{detect_collisions, CollisionConfig, CollisionKind, CollisionPair, DeviceModel, DeviceTiming, NoiseParams};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Chain,
    HeavyHexPatch,
}

/// Sampling ranges. Rates in rad/ns, frequencies in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub omega01_range: (f64, f64),
    pub anharmonicity_range: (f64, f64),
    pub coupling_range: (f64, f64),
    pub zphase_range: (f64, f64),
    pub zphase_max_distance: usize,
    pub zz_range: (f64, f64),
    pub readout_range: (f64, f64),
    pub pulse_error: f64,
    pub collision: CollisionConfig,
    pub timing: DeviceTiming,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            omega01_range: (4900.0, 5150.0),
            anharmonicity_range: (-340.0, -300.0),
            coupling_range: (1.5, 3.0),
            zphase_range: (1e-4, 2e-3),
            zphase_max_distance: 2,
            zz_range: (2e-5, 2e-4),
            readout_range: (0.005, 0.03),
            pulse_error: 0.0,
            collision: CollisionConfig::default(),
            timing: DeviceTiming::default(),
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn edges_for(n: usize, topology: Topology) -> Vec<(usize, usize)> {
    match topology {
        Topology::Chain => (1..n).map(|q| (q - 1, q)).collect(),
        Topology::HeavyHexPatch => heavy_hex_edges(n),
    }
}

/// Rows of 7 linked through bridge qubits on alternating columns, truncated at `n`.
fn heavy_hex_edges(n: usize) -> Vec<(usize, usize)> {
    const WIDTH: usize = 7;
    let mut edges = Vec::new();
    let mut next = 0usize;
    let mut prev_row: Vec<usize> = Vec::new();
    let mut pending_bridges: Vec<(usize, usize)> = Vec::new();
    let mut row_idx = 0;
    while next < n {
        let row: Vec<usize> = (next..(next + WIDTH).min(n)).collect();
        next += row.len();
        for w in row.windows(2) {
            edges.push((w[0], w[1]));
        }
        for &(bridge, col) in &pending_bridges {
            if let Some(&q) = row.get(col) {
                edges.push((bridge, q));
            }
        }
        pending_bridges.clear();
        prev_row.clone_from(&row);
        let offset = if row_idx % 2 == 0 { 0 } else { 2 };
        for col in (offset..WIDTH).step_by(4) {
            if next >= n || col >= prev_row.len() {
                break;
            }
            edges.push((prev_row[col], next));
            pending_bridges.push((next, col));
            next += 1;
        }
        row_idx += 1;
    }
    edges
}

/// Deterministic in `seed`. Frequencies are resampled until no pair within the
/// collision range is flagged in either direction.
pub fn synthesize_device(n_qubits: usize, topology: Topology, seed: u64, opts: &SynthOptions) -> DeviceModel {
    assert!(n_qubits >= 2, "a device needs at least two qubits");
    let mut r = rng::stream(seed, "device", &[n_qubits as u64]);
    let pairs = edges_for(n_qubits, topology);
    let edges = pairs.iter().map(|&(a, b)| (a, b, uniform(&mut r, opts.coupling_range))).collect();

    let mut device = DeviceModel {
        n_qubits,
        edges,
        omega01: vec![0.0; n_qubits],
        omega12: vec![0.0; n_qubits],
        timing: opts.timing.clone(),
        noise: NoiseParams::noiseless(),
    };
    let dist = device.distance_matrix();
    let near = |a: usize, b: usize| matches!(dist[a][b], Some(d) if d <= opts.collision.max_distance);
    let cfg = &opts.collision;
    let clashes = |w01: &[f64], w12: &[f64], a: usize, b: usize| {
        let check = |m: usize, u: usize| {
            let s = w01[m] + cfg.delta_s;
            (s - w01[u]).abs() <= cfg.type1_max || (s - w12[u]).abs() <= cfg.type3_max
        };
        check(a, b) || check(b, a)
    };
    for q in 0..n_qubits {
        for _attempt in 0..10_000 {
            device.omega01[q] = uniform(&mut r, opts.omega01_range);
            device.omega12[q] = device.omega01[q] + uniform(&mut r, opts.anharmonicity_range);
            if !(0..q).any(|p| near(p, q) && clashes(&device.omega01, &device.omega12, p, q)) {
                break;
            }
        }
    }

    let mut noise = NoiseParams::noiseless();
    for m in 0..n_qubits {
        for u in 0..n_qubits {
            if m != u && matches!(dist[m][u], Some(d) if d <= opts.zphase_max_distance) {
                noise.zphase_rate.push((m, u, log_uniform(&mut r, opts.zphase_range)));
            }
        }
    }
    noise.zz_rate = pairs.iter().map(|&(a, b)| (a, b, log_uniform(&mut r, opts.zz_range))).collect();
    noise.readout_error = (0..n_qubits).map(|_| uniform(&mut r, opts.readout_range)).collect();
    noise.pulse_error = opts.pulse_error;
    device.noise = noise;
    device
}

/// Retunes each `unitary` so it collides with `measured` and records the
/// pair's exchange dynamics (J in [1, 5] MHz, Δ in [0, 10] MHz).
pub fn inject_collision(device: &mut DeviceModel, pairs: &[(usize, usize, CollisionKind)], cfg: &CollisionConfig, seed: u64) {
    let mut r = rng::stream(seed, "collision", &[]);
    for &(m, u, kind) in pairs {
        let target = device.omega01[m] + cfg.delta_s;
        let anharm = device.omega12[u] - device.omega01[u];
        let offset = uniform(&mut r, (-0.25, 0.25)) * cfg.type1_max.min(cfg.type3_max);
        match kind {
            CollisionKind::Type1 => {
                device.omega01[u] = target + offset;
                device.omega12[u] = device.omega01[u] + anharm;
            }
            CollisionKind::Type3 => {
                device.omega12[u] = target + offset;
                device.omega01[u] = device.omega12[u] - anharm;
            }
        }
        let j_mhz = uniform(&mut r, (1.0, 5.0));
        let delta_mhz = uniform(&mut r, (0.0, 10.0));
        device.noise.collision_pairs.retain(|p| !(p.measured == m && p.unitary == u));
        device.noise.collision_pairs.push(CollisionPair { measured: m, unitary: u, delta_mhz, j_mhz });
        debug_assert!(detect_collisions(device, m, cfg).iter().any(|f| f.unitary == u && f.kind == kind));
    }
}
