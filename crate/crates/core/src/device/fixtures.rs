use serde::{Deserialize, Serialize};

use super::{synthesize_device, DeviceModel, NoiseParams, SynthOptions, Topology};

/// Noise knobs for [`calibrated_chain`]. Rates in rad/ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFixture {
    pub n_qubits: usize,
    /// Qubits `0..noisy` see measurement-induced Z phase from each other.
    pub noisy: usize,
    /// Z-phase rate at graph distance 1; halves with every further hop.
    pub zphase: f64,
    pub zphase_max_distance: usize,
    /// ZZ on edges inside the noisy block and on the rest of the chain.
    pub zz_noisy: f64,
    pub zz_quiet: f64,
    pub readout_error: f64,
    pub pulse_error: f64,
}

impl Default for ChainFixture {
    fn default() -> Self {
        Self {
            n_qubits: 10,
            noisy: 5,
            zphase: 1.5e-3,
            zphase_max_distance: 2,
            zz_noisy: 1e-4,
            zz_quiet: 3e-5,
            readout_error: 0.01,
            pulse_error: 0.002,
        }
    }
}

/// Chain with a noisy block at the low end and a quiet remainder.
pub fn calibrated_chain(p: &ChainFixture) -> DeviceModel {
    let mut dev = DeviceModel::chain(p.n_qubits);
    let mut noise = NoiseParams::noiseless();
    for m in 0..p.noisy {
        for u in 0..p.noisy {
            let d = m.abs_diff(u);
            if m != u && d <= p.zphase_max_distance {
                // small per-pair spread so no two rates coincide
                let spread = 1.0 + 0.1 * ((3 * m + 7 * u) % 5) as f64 / 4.0;
                noise.zphase_rate.push((m, u, p.zphase * spread / (1u32 << (d - 1)) as f64));
            }
        }
    }
    noise.zz_rate = dev
        .edges
        .iter()
        .map(|&(a, b, _)| {
            let base = if b < p.noisy { p.zz_noisy } else { p.zz_quiet };
            (a, b, base * (1.0 + 0.5 * (a % 3) as f64))
        })
        .collect();
    noise.readout_error = vec![p.readout_error; p.n_qubits];
    noise.pulse_error = p.pulse_error;
    dev.noise = noise;
    dev
}

/// The shipped ten-qubit benchmark device.
pub fn calibrated_chain10() -> DeviceModel {
    calibrated_chain(&ChainFixture::default())
}

/// Thirty-qubit collision-free chain used for scaling runs.
pub fn chain30() -> DeviceModel {
    synthesize_device(30, Topology::Chain, 30, &SynthOptions::default())
}
