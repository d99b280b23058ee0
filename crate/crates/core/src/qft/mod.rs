//! Semiclassical QFT with mid-circuit measurement, QFT† basis-state
//! preparation, phase-flipped X-basis GHZ states, process fidelity and SNR.
//!
//! Qubit 0 is the most significant bit of the input. QFT+M writes output bit
//! `2^j` to clbit `j`, so outcome values are read with clbit 0 as the LSB.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit::{build_schedule, DynamicCircuit, Gate, ScheduleError};
use crate::dd::{dd_pulses, DdError, DdMode};
use crate::device::DeviceModel;
use crate::sim::{exact_distribution, key_value_lsb_first, run_shots, ExactDistribution, OutcomeDistribution, SimError};
use crate::{exec, rng};

#[derive(Debug, thiserror::Error)]
pub enum QftError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dd(#[from] DdError),
    #[error("circuit needs {need} qubits but the device has {have}")]
    TooFewQubits { need: usize, have: usize },
}

/// H, measure, then conditional `R_k` on every later qubit, one layer per qubit.
pub fn build_qft_m(n: usize) -> DynamicCircuit {
    let mut c = DynamicCircuit::new(n, n);
    for m in 0..n {
        c.gate(Gate::H { qubit: m });
        c.measure(m, m);
        for t in m + 1..n {
            c.conditional(Gate::RK { qubit: t, k: (t - m + 1) as u32 }, m, 1);
        }
    }
    c
}

/// Product state `QFT†|s⟩`: qubit `j` gets `(|0⟩ + e^{−2πi s/2^{j+1}}|1⟩)/√2`.
pub fn prepare_qft_dagger_basis(n: usize, s: usize) -> DynamicCircuit {
    let mut c = DynamicCircuit::new(n, 0);
    for j in 0..n {
        c.gate(Gate::H { qubit: j });
        let phase = -2.0 * PI * (s % (1 << (j + 1))) as f64 / (1u64 << (j + 1)) as f64;
        if phase != 0.0 {
            c.gate(Gate::RZ { qubit: j, theta: phase });
        }
    }
    c
}

/// Outcome value of a QFT+M bitstring.
pub fn qft_outcome_value(key: &str) -> usize {
    key_value_lsb_first(key)
}

/// `prepare ∘ QFT+M` on the first `n` qubits of an `n_device`-qubit device.
pub fn qft_circuit_with_input(n: usize, n_device: usize, input: &DynamicCircuit) -> DynamicCircuit {
    let map: Vec<usize> = (0..n).collect();
    let mut c = DynamicCircuit::new(n_device, n);
    c.append_mapped(input, &map, 0);
    c.append_mapped(&build_qft_m(n), &map, 0);
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhzSpec {
    pub n: usize,
    pub m: usize,
}

/// Fan-out GHZ, Hadamard layer, then a π phase flip at place value `2^m`,
/// which is qubit `n − 1 − m`.
pub fn build_ghz_psi_m(spec: GhzSpec) -> DynamicCircuit {
    assert!(spec.m < spec.n, "m must be below n");
    let n = spec.n;
    let mut c = DynamicCircuit::new(n, 0);
    c.gate(Gate::H { qubit: 0 });
    for q in 0..n - 1 {
        c.gate(Gate::CX { control: q, target: q + 1 });
    }
    for q in 0..n {
        c.gate(Gate::H { qubit: q });
    }
    c.gate(Gate::RZ { qubit: n - 1 - spec.m, theta: PI });
    c
}

/// `(1/2^{2m+1}) csc²(π/2^{m+1})`.
pub fn peak_amplitude_closed_form(m: u32) -> f64 {
    let s = (PI / 2f64.powi(m as i32 + 1)).sin();
    1.0 / (2f64.powi(2 * m as i32 + 1) * s * s)
}

/// Population of every outcome value `0..2^n`.
pub fn populations_exact(dist: &ExactDistribution, n: usize) -> Vec<f64> {
    let mut p = vec![0.0; 1 << n];
    for (k, &v) in dist {
        p[qft_outcome_value(k)] += v;
    }
    p
}

pub fn populations_sampled(dist: &OutcomeDistribution, n: usize) -> Vec<f64> {
    let mut p = vec![0.0; 1 << n];
    for (k, &c) in &dist.counts {
        p[qft_outcome_value(k)] += c as f64 / dist.shots.max(1) as f64;
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrEntry {
    pub m: usize,
    pub p_peak: f64,
    pub p_mirror: f64,
    pub noise: f64,
    /// `None` when the populations have zero variance.
    pub snr: Option<f64>,
}

/// `(P_peak + P_mirror) / (2 σ)` with σ the standard deviation of all `2^n`
/// populations.
pub fn compute_snr(populations: &[f64], n: usize, m: usize) -> SnrEntry {
    let size = 1usize << n;
    assert_eq!(populations.len(), size);
    let peak = 1usize << (n - 1 - m);
    let mirror = size - peak;
    let mean = populations.iter().sum::<f64>() / size as f64;
    let var = populations.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / size as f64;
    let noise = var.sqrt();
    let (p_peak, p_mirror) = (populations[peak], populations[mirror]);
    let snr = (noise > 0.0).then(|| (p_peak + p_mirror) / (2.0 * noise));
    SnrEntry { m, p_peak, p_mirror, noise, snr }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcFidelityReport {
    pub n: usize,
    pub samples: Vec<usize>,
    pub p_hat: Vec<f64>,
    pub f_proc: f64,
    /// Shot-noise standard error of `f_proc`.
    pub stderr: f64,
}

/// Mean probability of recovering `s` from `QFT†|s⟩` over `n_samples` uniformly
/// drawn `s`, with DD from `mode` on the QFT+M.
pub fn compute_proc_fidelity(
    n: usize,
    n_samples: usize,
    mode: &DdMode,
    device: &DeviceModel,
    shots: u64,
    seed: u64,
) -> Result<ProcFidelityReport, QftError> {
    if device.n_qubits < n {
        return Err(QftError::TooFewQubits { need: n, have: device.n_qubits });
    }
    let samples = sample_inputs(n, n_samples, seed);
    let results = exec::map_indexed(samples.len(), |i| -> Result<f64, QftError> {
        let s = samples[i];
        let c = qft_circuit_with_input(n, device.n_qubits, &prepare_qft_dagger_basis(n, s));
        let sched = build_schedule(&c, &device.timing)?;
        let pulses = dd_pulses(&sched, device, mode)?;
        let dist = run_shots(&sched, &pulses, device, shots, rng::derive(seed, "fidelity-shots", &[i as u64]))?;
        Ok(populations_sampled(&dist, n)[s])
    });
    let p_hat = results.into_iter().collect::<Result<Vec<f64>, _>>()?;
    let k = p_hat.len() as f64;
    let f_proc = p_hat.iter().sum::<f64>() / k;
    let stderr = (p_hat.iter().map(|p| p * (1.0 - p) / shots as f64).sum::<f64>()).sqrt() / k;
    Ok(ProcFidelityReport { n, samples, p_hat, f_proc, stderr })
}

/// Uniform draws of `s ∈ [0, 2^n)`.
pub fn sample_inputs(n: usize, n_samples: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut r = rng::stream(seed, "fidelity-inputs", &[n as u64]);
    (0..n_samples).map(|_| r.gen_range(0..1usize << n)).collect()
}

/// GHZ Ψ_m followed by QFT+M on the first `n` device qubits.
pub fn ghz_qft_circuit(n: usize, m: usize, n_device: usize) -> DynamicCircuit {
    qft_circuit_with_input(n, n_device, &build_ghz_psi_m(GhzSpec { n, m }))
}

/// Sampled output populations of QFT|Ψ_m⟩ for `m = 0..n`.
pub fn ghz_populations(n: usize, mode: &DdMode, device: &DeviceModel, shots: u64, seed: u64) -> Result<Vec<Vec<f64>>, QftError> {
    if device.n_qubits < n {
        return Err(QftError::TooFewQubits { need: n, have: device.n_qubits });
    }
    let rows = exec::map_indexed(n, |m| -> Result<Vec<f64>, QftError> {
        let sched = build_schedule(&ghz_qft_circuit(n, m, device.n_qubits), &device.timing)?;
        let pulses = dd_pulses(&sched, device, mode)?;
        let dist = run_shots(&sched, &pulses, device, shots, rng::derive(seed, "ghz-shots", &[m as u64]))?;
        Ok(populations_sampled(&dist, n))
    });
    rows.into_iter().collect()
}

/// Exact noiseless output populations of QFT|Ψ_m⟩ for `m = 0..n`.
pub fn ghz_populations_ideal(n: usize) -> Result<Vec<Vec<f64>>, QftError> {
    let timing = DeviceModel::chain(n).timing;
    (0..n)
        .map(|m| {
            let sched = build_schedule(&ghz_qft_circuit(n, m, n), &timing)?;
            Ok(populations_exact(&exact_distribution(&sched)?, n))
        })
        .collect()
}

/// SNR of the sampled QFT output of every Ψ_m.
pub fn ghz_snr_sweep(n: usize, mode: &DdMode, device: &DeviceModel, shots: u64, seed: u64) -> Result<Vec<SnrEntry>, QftError> {
    let pops = ghz_populations(n, mode, device, shots, seed)?;
    Ok(pops.iter().enumerate().map(|(m, p)| compute_snr(p, n, m)).collect())
}

/// SNR of the exact noiseless output of every Ψ_m.
pub fn ghz_snr_ideal(n: usize) -> Result<Vec<SnrEntry>, QftError> {
    let pops = ghz_populations_ideal(n)?;
    Ok(pops.iter().enumerate().map(|(m, p)| compute_snr(p, n, m)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Instruction;
    use crate::sim::{exact_distribution, gates, StateVector};
    use num_complex::Complex64 as C;
    use proptest::prelude::*;

    /// Input index with qubit 0 as MSB.
    fn msb_index(idx: usize, n: usize) -> usize {
        (0..n).filter(|&q| idx >> q & 1 == 1).map(|q| 1 << (n - 1 - q)).sum()
    }

    fn dense_qft_probs(state: &StateVector, n: usize) -> Vec<f64> {
        let size = 1usize << n;
        let mut psi = vec![C::new(0.0, 0.0); size];
        for (idx, a) in state.amplitudes.iter().enumerate() {
            psi[msb_index(idx, n)] = *a;
        }
        (0..size)
            .map(|y| {
                let amp: C = (0..size)
                    .map(|x| psi[x] * C::cis(2.0 * PI * (x * y % size) as f64 / size as f64))
                    .sum::<C>()
                    / (size as f64).sqrt();
                amp.norm_sqr()
            })
            .collect()
    }

    fn run_unitary(c: &DynamicCircuit) -> StateVector {
        let mut s = StateVector::zero(c.n_qubits);
        for inst in &c.instructions {
            match inst {
                Instruction::Gate { gate } => match *gate {
                    Gate::H { qubit } => s.apply_1q(qubit, &gates::h()),
                    Gate::SX { qubit } => s.apply_1q(qubit, &gates::sx()),
                    Gate::X { qubit } => s.apply_1q(qubit, &gates::x()),
                    Gate::Y { qubit } => s.apply_1q(qubit, &gates::y()),
                    Gate::Z { qubit } => s.apply_1q(qubit, &gates::z()),
                    Gate::RZ { qubit, theta } => s.apply_1q(qubit, &gates::rz(theta)),
                    Gate::RK { qubit, k } => s.apply_1q(qubit, &gates::rz(2.0 * PI / (1u64 << k) as f64)),
                    Gate::CX { control, target } => s.apply_cx(control, target),
                },
                _ => panic!("unitary circuit expected"),
            }
        }
        s
    }

    fn qft_m_exact(n: usize, input: &DynamicCircuit) -> Vec<f64> {
        let dev = DeviceModel::chain(n);
        let c = qft_circuit_with_input(n, n, input);
        let sched = build_schedule(&c, &dev.timing).unwrap();
        populations_exact(&exact_distribution(&sched).unwrap(), n)
    }

    #[test]
    fn structure() {
        let c = build_qft_m(1);
        assert_eq!(c.instructions.len(), 2);
        let c = build_qft_m(3);
        let conds: Vec<(usize, u32, usize)> = c
            .instructions
            .iter()
            .filter_map(|i| match i {
                Instruction::Conditional { gate: Gate::RK { qubit, k }, clbit, .. } => Some((*qubit, *k, *clbit)),
                _ => None,
            })
            .collect();
        assert_eq!(conds, vec![(1, 2, 0), (2, 3, 0), (2, 2, 1)]);
        assert_eq!(c.n_measurements(), 3);
    }

    #[test]
    fn qft_dagger_basis_matches_dense_column() {
        for n in 1..=5 {
            for s in 0..1usize << n {
                let st = run_unitary(&prepare_qft_dagger_basis(n, s));
                let size = 1usize << n;
                for (idx, a) in st.amplitudes.iter().enumerate() {
                    let x = msb_index(idx, n);
                    let want = C::cis(-2.0 * PI * (x * s % size) as f64 / size as f64) / (size as f64).sqrt();
                    // equal up to a global phase fixed by the |0…0⟩ amplitude
                    let g = st.amplitudes[0] / C::new(1.0 / (size as f64).sqrt(), 0.0);
                    assert!((a - want * g).norm() < 1e-12, "n={n} s={s} x={x}");
                }
            }
        }
    }

    #[test]
    fn qft_m_inverts_qft_dagger() {
        for n in 1..=5 {
            for s in [0, 1, (1 << n) - 1, (1 << n) / 3] {
                let p = qft_m_exact(n, &prepare_qft_dagger_basis(n, s));
                assert!((p[s] - 1.0).abs() < 1e-12, "n={n} s={s}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn semiclassical_matches_dense(n in 1usize..=5, angles in prop::collection::vec(0.0f64..6.3, 15)) {
            let mut input = DynamicCircuit::new(n, 0);
            for q in 0..n {
                input.gate(Gate::RZ { qubit: q, theta: angles[3 * q] });
                input.gate(Gate::SX { qubit: q });
                input.gate(Gate::RZ { qubit: q, theta: angles[3 * q + 1] });
                input.gate(Gate::SX { qubit: q });
                input.gate(Gate::RZ { qubit: q, theta: angles[3 * q + 2] });
            }
            let dense = dense_qft_probs(&run_unitary(&input), n);
            let semi = qft_m_exact(n, &input);
            let tv: f64 = 0.5 * dense.iter().zip(&semi).map(|(a, b)| (a - b).abs()).sum::<f64>();
            prop_assert!(tv < 1e-10, "tv = {tv}");
        }
    }

    #[test]
    fn ghz_matches_dense_definition() {
        for n in 2..=5 {
            for m in 0..n {
                let st = run_unitary(&build_ghz_psi_m(GhzSpec { n, m }));
                let size = 1usize << n;
                for (idx, a) in st.amplitudes.iter().enumerate() {
                    let s = msb_index(idx, n);
                    let w: u32 = (s as u32).count_ones();
                    let wm = (s >> m & 1) as i32;
                    let want = if w % 2 == 0 { (-1f64).powi(wm) * 2.0 / (2f64).powf((n + 1) as f64 / 2.0) } else { 0.0 };
                    let g = st.amplitudes[0] / C::new(2.0 / (2f64).powf((n + 1) as f64 / 2.0), 0.0);
                    assert!((a - C::new(want, 0.0) * g).norm() < 1e-12, "n={n} m={m} s={s}");
                    let _ = size;
                }
            }
        }
    }

    #[test]
    fn ghz_overlap_between_flips() {
        let a = run_unitary(&build_ghz_psi_m(GhzSpec { n: 4, m: 0 }));
        let b = run_unitary(&build_ghz_psi_m(GhzSpec { n: 4, m: 1 }));
        // amplitudes ±2^{-3/2} on the 8 even-weight strings; the two flips agree
        // in sign on the strings where bits 0 and 1 are equal, 4 of 8
        assert!(a.overlap(&b).abs() < 1e-12);
    }

    #[test]
    fn closed_form_values() {
        assert!((peak_amplitude_closed_form(0) - 0.5).abs() < 1e-15);
        assert!((peak_amplitude_closed_form(1) - 0.25).abs() < 1e-15);
        let floor = 2.0 / (PI * PI);
        for m in 0..20 {
            assert!(peak_amplitude_closed_form(m) > floor);
        }
        assert!((peak_amplitude_closed_form(25) - floor).abs() < 1e-12);
    }

    #[test]
    fn peak_matches_closed_form_small() {
        for n in 2..=6 {
            for m in 0..n {
                let c = ghz_qft_circuit(n, m, n);
                let sched = build_schedule(&c, &DeviceModel::chain(n).timing).unwrap();
                let p = populations_exact(&exact_distribution(&sched).unwrap(), n);
                let dense = dense_qft_probs(&run_unitary(&build_ghz_psi_m(GhzSpec { n, m })), n);
                let peak = 1 << (n - 1 - m);
                assert!((p[peak] - peak_amplitude_closed_form(m as u32)).abs() < 1e-10, "n={n} m={m}");
                assert!((p[peak] - dense[peak]).abs() < 1e-10);
                for s in 1..1 << n {
                    assert!((p[s] - p[(1 << n) - s]).abs() < 1e-10, "mirror n={n} m={m} s={s}");
                }
            }
        }
    }

    #[test]
    fn snr_cases() {
        let n = 4;
        let uniform = vec![1.0 / 16.0; 16];
        assert_eq!(compute_snr(&uniform, n, 1).snr, None);
        let mut delta = vec![0.0; 16];
        delta[4] = 1.0;
        let e = compute_snr(&delta, n, 1);
        // mean 1/16, variance (1/16)(15/16)
        let sigma = (15.0f64).sqrt() / 16.0;
        assert!((e.snr.unwrap() - 1.0 / (2.0 * sigma)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_sweep_tracks_ideal_snr() {
        let n = 5;
        let ideal = ghz_snr_ideal(n).unwrap();
        let sampled = ghz_snr_sweep(n, &DdMode::none(), &DeviceModel::chain(n), 20_000, 3).unwrap();
        for (a, b) in ideal.iter().zip(&sampled) {
            let (a, b) = (a.snr.unwrap(), b.snr.unwrap());
            assert!((a - b).abs() / a < 0.1, "{a} vs {b}");
        }
    }

    #[test]
    fn noiseless_fidelity_is_one() {
        let dev = DeviceModel::chain(4);
        let r = compute_proc_fidelity(4, 16, &DdMode::none(), &dev, 2000, 7).unwrap();
        assert_eq!(r.samples.len(), 16);
        assert!(r.f_proc > 0.999);
    }
}
