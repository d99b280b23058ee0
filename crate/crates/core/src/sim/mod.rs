//! Shot-sampled and exact statevector simulation of scheduled dynamic circuits
//! under coherent idle noise, DD pulses, mid-circuit measurement and feedforward.
//!
//! Pauli pulses and diagonal phases are tracked lazily per qubit (a Pauli frame
//! plus accumulated Z/ZZ angles) and only written into the amplitudes when a
//! non-diagonal operation touches the qubit.

mod dist;
mod noise;
mod program;
mod pulse;
mod state;

pub use dist::{
    key_from_value_lsb_first, key_value_lsb_first, marginal_exact, select_bits, total_variation, ExactDistribution,
    OutcomeDistribution,
};
pub use noise::{collision_unitary, evolve_idle_noise, mhz_to_rad_per_ns};
pub use pulse::{apply_pulse, Pauli, PulseEvent, PulseLabel};
pub use state::{gates, Mat2, StateVector};

use num_complex::Complex64 as C;
use rand::Rng;

use crate::circuit::ScheduledCircuit;
use crate::device::{DeviceModel, NoiseParams};
use crate::{exec, rng};
use program::{compile, Op, Program};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("pulse on qubit {qubit} at t={time} ns lies outside every idle window of that qubit")]
    PulseOutsideWindow { qubit: usize, time: u64 },
    #[error("circuit has {circuit} qubits but the device has {device}")]
    QubitCountMismatch { circuit: usize, device: usize },
    #[error("exact evaluation exceeded {cap} measurement branches")]
    BranchExplosion { cap: usize },
    #[error("exact evaluation needs deterministic noise; pulse error and dephasing must be zero")]
    StochasticNoise,
}

/// Default limit on explored branches in exact evaluation.
pub const DEFAULT_BRANCH_CAP: usize = 1 << 22;

/// Branches lighter than this are dropped during exact evaluation.
const PRUNE_WEIGHT: f64 = 1e-18;

#[derive(Clone)]
struct Executor {
    state: StateVector,
    frame: Vec<Pauli>,
    theta: Vec<f64>,
    /// Row-major `n × n`, only `[a][b]` with `a < b` used.
    zz: Vec<f64>,
    clbits: Vec<u8>,
    /// Readout error still to be applied to each clbit's final value.
    pending_flip: Vec<f64>,
}

impl Executor {
    fn new(prog: &Program) -> Self {
        let n = prog.n_local;
        Self {
            state: StateVector::zero(n),
            frame: vec![Pauli::I; n],
            theta: vec![0.0; n],
            zz: vec![0.0; n * n],
            clbits: vec![0; prog.n_clbits],
            pending_flip: vec![0.0; prog.n_clbits],
        }
    }

    fn reset(&mut self) {
        self.state.reset();
        self.frame.fill(Pauli::I);
        self.theta.fill(0.0);
        self.zz.fill(0.0);
        self.clbits.fill(0);
        self.pending_flip.fill(0.0);
    }

    fn zz_index(&self, a: usize, b: usize) -> usize {
        let n = self.state.n;
        if a < b {
            a * n + b
        } else {
            b * n + a
        }
    }

    /// Write qubit `q`'s pending phases and frame into the amplitudes.
    fn flush(&mut self, q: usize) {
        let n = self.state.n;
        let partners: Vec<(usize, f64)> = (0..n)
            .filter(|&b| b != q)
            .filter_map(|b| {
                let v = self.zz[self.zz_index(q, b)];
                (v != 0.0).then_some((b, v))
            })
            .collect();
        if self.theta[q] != 0.0 || !partners.is_empty() {
            // E = z_q (θ_q + Σ_b θ_qb z_b); amplitude gains exp(−iE/2).
            let k = partners.len();
            let table: Vec<C> = (0..1usize << k)
                .map(|bits| {
                    let s = self.theta[q]
                        + partners
                            .iter()
                            .enumerate()
                            .map(|(j, &(_, v))| if bits >> j & 1 == 1 { -v } else { v })
                            .sum::<f64>();
                    C::cis(-s / 2.0)
                })
                .collect();
            let qmask = 1usize << q;
            for (i, amp) in self.state.amplitudes.iter_mut().enumerate() {
                let key = partners.iter().enumerate().fold(0usize, |acc, (j, &(b, _))| acc | ((i >> b & 1) << j));
                let f = table[key];
                *amp *= if i & qmask == 0 { f } else { f.conj() };
            }
            self.theta[q] = 0.0;
            for (b, _) in partners {
                let idx = self.zz_index(q, b);
                self.zz[idx] = 0.0;
            }
        }
        let f = std::mem::take(&mut self.frame[q]);
        pulse::apply_pauli(&mut self.state, q, f);
    }

    /// Applies a non-measurement op. Stochastic ops draw from `rng`.
    fn apply<R: Rng>(&mut self, op: &Op, rng: &mut Option<&mut R>) {
        match *op {
            Op::Phase { q, theta } => {
                self.theta[q] += if self.frame[q].x { -theta } else { theta };
            }
            Op::ZZ { a, b, theta } => {
                let flip = self.frame[a].x ^ self.frame[b].x;
                let idx = self.zz_index(a, b);
                self.zz[idx] += if flip { -theta } else { theta };
            }
            Op::Pauli { q, p } => self.frame[q] = self.frame[q].compose(p),
            Op::Depolarize { q, p } => {
                let r = rng.as_deref_mut().expect("stochastic op needs an rng");
                if r.gen::<f64>() < p {
                    let e = pulse::random_pauli(r);
                    self.frame[q] = self.frame[q].compose(e);
                }
            }
            Op::Dephase { q, p } => {
                let r = rng.as_deref_mut().expect("stochastic op needs an rng");
                if r.gen::<f64>() < p {
                    self.frame[q] = self.frame[q].compose(Pauli::Z);
                }
            }
            Op::Unitary { q, ref m } => {
                self.flush(q);
                self.state.apply_1q(q, m);
            }
            Op::CX { c, t } => {
                self.flush(c);
                self.flush(t);
                self.state.apply_cx(c, t);
            }
            Op::Exchange { a, b, e00, e11, ref block } => {
                self.flush(a);
                self.flush(b);
                self.state.apply_exchange(a, b, e00, e11, block);
            }
            Op::Cond { clbit, value, ref op } => {
                if self.clbits[clbit] == value {
                    self.apply(op, rng);
                }
            }
            Op::Measure { .. } => unreachable!("measurements are handled by the caller"),
        }
    }

    /// One trajectory; returns the recorded bitstring.
    fn run_shot<R: Rng>(&mut self, prog: &Program, rng: &mut R) -> String {
        self.reset();
        for op in &prog.ops {
            if let Op::Measure { q, clbit, eps, .. } = *op {
                self.flush(q);
                let p1 = self.state.prob_one(q).clamp(0.0, 1.0);
                let born: f64 = rng.gen();
                let readout: f64 = rng.gen();
                let bit = u8::from(born < p1);
                self.state.project(q, bit, if bit == 1 { p1 } else { 1.0 - p1 });
                self.clbits[clbit] = bit ^ u8::from(readout < eps);
            } else {
                self.apply(op, &mut Some(&mut *rng));
            }
        }
        self.key()
    }

    fn key(&self) -> String {
        self.clbits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    fn explore(
        mut self,
        prog: &Program,
        mut pc: usize,
        weight: f64,
        out: &mut Vec<(String, f64, Vec<f64>)>,
        budget: &mut usize,
        cap: usize,
    ) -> Result<(), SimError> {
        let mut none: Option<&mut rng::StreamRng> = None;
        while pc < prog.ops.len() {
            let op = &prog.ops[pc];
            pc += 1;
            let Op::Measure { q, clbit, eps, branch } = *op else {
                self.apply(op, &mut none);
                continue;
            };
            self.flush(q);
            let p1 = self.state.prob_one(q).clamp(0.0, 1.0);
            let outcomes = [(0u8, 1.0 - p1), (1u8, p1)];
            let live: Vec<(u8, f64)> = outcomes.into_iter().filter(|&(_, p)| weight * p > PRUNE_WEIGHT).collect();
            let readouts: Vec<(u8, f64)> = if branch && eps > 0.0 { vec![(0, 1.0 - eps), (1, eps)] } else { vec![(0, 1.0)] };
            let mut children = Vec::new();
            for &(bit, p) in &live {
                for &(flip, pf) in &readouts {
                    if weight * p * pf > PRUNE_WEIGHT {
                        children.push((bit, p, flip, pf));
                    }
                }
            }
            if children.len() > 1 {
                *budget += children.len();
                if *budget > cap {
                    return Err(SimError::BranchExplosion { cap });
                }
            }
            let last = children.len().saturating_sub(1);
            for (i, (bit, p, flip, pf)) in children.into_iter().enumerate() {
                let mut child = if i == last { std::mem::replace(&mut self, Executor::placeholder()) } else { self.clone() };
                child.state.project(q, bit, p);
                child.clbits[clbit] = bit ^ flip;
                child.pending_flip[clbit] = if branch { 0.0 } else { eps };
                child.explore(prog, pc, weight * p * pf, out, budget, cap)?;
            }
            return Ok(());
        }
        out.push((self.key(), weight, self.pending_flip));
        Ok(())
    }

    fn placeholder() -> Self {
        Self {
            state: StateVector { n: 0, amplitudes: Vec::new() },
            frame: Vec::new(),
            theta: Vec::new(),
            zz: Vec::new(),
            clbits: Vec::new(),
            pending_flip: Vec::new(),
        }
    }
}

fn check_device(sched: &ScheduledCircuit, device: &DeviceModel) -> Result<(), SimError> {
    if sched.circuit.n_qubits != device.n_qubits {
        return Err(SimError::QubitCountMismatch { circuit: sched.circuit.n_qubits, device: device.n_qubits });
    }
    Ok(())
}

const SHOT_CHUNK: usize = 64;

/// Sample `shots` independent trajectories. Shot `i` draws only from the
/// stream `(seed, "shot", i)`, so counts do not depend on the thread count.
pub fn run_shots(
    sched: &ScheduledCircuit,
    pulses: &[PulseEvent],
    device: &DeviceModel,
    shots: u64,
    seed: u64,
) -> Result<OutcomeDistribution, SimError> {
    check_device(sched, device)?;
    let prog = compile(sched, pulses, &device.noise, device.noise.pulse_error)?;
    let n_chunks = (shots as usize).div_ceil(SHOT_CHUNK);
    let parts = exec::map_indexed(n_chunks, |c| {
        let mut ex = Executor::new(&prog);
        let mut local = OutcomeDistribution::default();
        let end = ((c + 1) * SHOT_CHUNK).min(shots as usize);
        for i in c * SHOT_CHUNK..end {
            let mut r = rng::stream(seed, "shot", &[i as u64]);
            local.add(ex.run_shot(&prog, &mut r), 1);
        }
        local
    });
    let mut out = OutcomeDistribution::default();
    for p in parts {
        out.merge(p);
    }
    Ok(out)
}

/// Exact recorded-bitstring distribution of the noiseless circuit.
pub fn exact_distribution(sched: &ScheduledCircuit) -> Result<ExactDistribution, SimError> {
    exact_with(sched, &[], &NoiseParams::noiseless(), DEFAULT_BRANCH_CAP)
}

/// Exact distribution under the device's coherent noise, readout errors and the
/// given pulses. Fails with [`SimError::StochasticNoise`] if the device has
/// pulse error or dephasing.
pub fn exact_distribution_noisy(
    sched: &ScheduledCircuit,
    pulses: &[PulseEvent],
    device: &DeviceModel,
) -> Result<ExactDistribution, SimError> {
    check_device(sched, device)?;
    if !device.noise.is_coherent() {
        return Err(SimError::StochasticNoise);
    }
    exact_with(sched, pulses, &device.noise, DEFAULT_BRANCH_CAP)
}

pub fn exact_with(
    sched: &ScheduledCircuit,
    pulses: &[PulseEvent],
    noise: &NoiseParams,
    branch_cap: usize,
) -> Result<ExactDistribution, SimError> {
    let prog = compile(sched, pulses, noise, noise.pulse_error)?;
    if !prog.is_coherent() {
        return Err(SimError::StochasticNoise);
    }
    let mut leaves = Vec::new();
    let mut budget = 0;
    Executor::new(&prog).explore(&prog, 0, 1.0, &mut leaves, &mut budget, branch_cap)?;

    // Which measurements are branched is fixed by the circuit, so every leaf
    // carries the same pending flips and the channel can act on the aggregate.
    let flips = leaves.first().map(|l| l.2.clone()).unwrap_or_default();
    debug_assert!(leaves.iter().all(|l| l.2 == flips));
    let mut dist = ExactDistribution::new();
    for (key, w, _) in leaves {
        *dist.entry(key).or_insert(0.0) += w;
    }
    for (bit, &eps) in flips.iter().enumerate() {
        if eps > 0.0 {
            let mut next = ExactDistribution::new();
            for (k, p) in dist {
                let mut flipped = k.clone().into_bytes();
                flipped[bit] = if flipped[bit] == b'1' { b'0' } else { b'1' };
                *next.entry(String::from_utf8(flipped).expect("ascii key")).or_insert(0.0) += p * eps;
                *next.entry(k).or_insert(0.0) += p * (1.0 - eps);
            }
            dist = next;
        }
    }
    Ok(dist)
}
