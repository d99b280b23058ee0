use std::f64::consts::PI;

use num_complex::Complex64 as C;
use rand::Rng;

use super::pulse::{apply_pauli, Pauli};
use super::state::{Mat2, StateVector};
use crate::device::DeviceModel;

/// MHz to rad/ns.
pub fn mhz_to_rad_per_ns(f: f64) -> f64 {
    2.0 * PI * f * 1e-3
}

/// exp(−iHt) for H = (Δ/2)σ_z on the idle qubit + J(σ+σ− + σ−σ+), as the
/// `(e00, e11, block)` triple accepted by [`StateVector::apply_exchange`] with
/// the measured qubit first. `delta` and `j` in rad/ns, `t` in ns.
pub fn collision_unitary(delta: f64, j: f64, t: f64) -> (C, C, Mat2) {
    let half = delta / 2.0;
    let omega = (half * half + j * j).sqrt();
    let (c, s_over) = if omega == 0.0 { (1.0, t) } else { ((omega * t).cos(), (omega * t).sin() / omega) };
    let mi = |v: f64| C::new(0.0, -s_over * v);
    let block = [[C::new(c, 0.0) + mi(half), mi(j)], [mi(j), C::new(c, 0.0) - mi(half)]];
    (C::cis(-half * t), C::cis(half * t), block)
}

/// Noise accrued over `dt` ns by the `idle` qubits while the `measuring` qubits
/// are being read out. Qubit indices are device indices and must match `state`.
pub fn evolve_idle_noise<R: Rng>(
    state: &mut StateVector,
    idle: &[usize],
    measuring: &[usize],
    dt: f64,
    device: &DeviceModel,
    rng: &mut R,
) {
    let noise = &device.noise;
    let active: Vec<_> = noise
        .collision_pairs
        .iter()
        .filter(|p| measuring.contains(&p.measured) && idle.contains(&p.unitary))
        .collect();
    let mut merged = vec![0.0; active.len()];
    for &u in idle {
        let rate: f64 = measuring.iter().map(|&m| noise.zphase(m, u)).sum();
        if rate == 0.0 {
            continue;
        }
        // the Z term on a colliding qubit is part of its exchange Hamiltonian
        match active.iter().position(|p| p.unitary == u) {
            Some(i) => merged[i] = rate,
            None => state.apply_rz(u, rate * dt),
        }
    }
    for &(a, b, zeta) in &noise.zz_rate {
        if zeta != 0.0 && idle.contains(&a) && idle.contains(&b) {
            state.apply_rzz(a, b, zeta * dt);
        }
    }
    for (pair, extra) in active.iter().zip(merged) {
        let (e00, e11, block) =
            collision_unitary(mhz_to_rad_per_ns(pair.delta_mhz) + extra, mhz_to_rad_per_ns(pair.j_mhz), dt);
        state.apply_exchange(pair.measured, pair.unitary, e00, e11, &block);
    }
    for &u in idle {
        let rate = noise.t2(u);
        if rate > 0.0 && rng.gen::<f64>() < 1.0 - (-rate * dt).exp() {
            apply_pauli(state, u, Pauli::Z);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::state::gates;

    fn basis(n: usize, idx: usize) -> StateVector {
        let mut a = vec![C::new(0.0, 0.0); 1 << n];
        a[idx] = C::new(1.0, 0.0);
        StateVector::from_amplitudes(a)
    }

    #[test]
    fn full_turn_is_identity() {
        let mut dev = DeviceModel::chain(2);
        dev.noise.zphase_rate.push((0, 1, 1e-3));
        let mut s = StateVector::zero(2);
        s.apply_1q(1, &gates::h());
        let before = s.clone();
        let dt = 2.0 * PI / 1e-3;
        evolve_idle_noise(&mut s, &[1], &[0], dt, &dev, &mut crate::rng::stream(0, "t", &[]));
        assert!((s.overlap(&before) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resonant_half_period_swaps_excitation() {
        let j = 0.01;
        let (e00, e11, block) = collision_unitary(0.0, j, PI / 2.0 / j);
        // measured qubit = bit 0, idle = bit 1; |m=1,u=0> is index 1
        let mut s = basis(2, 1);
        s.apply_exchange(0, 1, e00, e11, &block);
        assert!((s.amplitudes[2] - C::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_coupling_keeps_populations() {
        let (e00, e11, block) = collision_unitary(0.3, 0.0, 17.0);
        let mut s = StateVector::zero(2);
        s.apply_1q(0, &gates::h());
        s.apply_1q(1, &gates::h());
        let before = s.probabilities();
        s.apply_exchange(0, 1, e00, e11, &block);
        for (a, b) in before.iter().zip(s.probabilities()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn collision_unitary_is_unitary() {
        let (e00, e11, b) = collision_unitary(0.05, 0.02, 123.0);
        assert!((e00.norm() - 1.0).abs() < 1e-12 && (e11.norm() - 1.0).abs() < 1e-12);
        let g = gates::mul(&[[b[0][0].conj(), b[1][0].conj()], [b[0][1].conj(), b[1][1].conj()]], &b);
        assert!((g[0][0] - C::new(1.0, 0.0)).norm() < 1e-12 && g[0][1].norm() < 1e-12);
    }
}
