//! Lowers a scheduled circuit, its DD pulses and the device noise into a flat,
//! time-ordered list of operations on the active qubits.

use std::collections::BTreeSet;

use num_complex::Complex64 as C;

use super::noise::{collision_unitary, mhz_to_rad_per_ns};
use super::pulse::{Pauli, PulseEvent};
use super::state::{gates, Mat2};
use super::SimError;
use crate::circuit::{Gate, Instruction, Ns, ScheduledCircuit};
use crate::device::NoiseParams;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    /// exp(−iθ/2 Z), up to global phase.
    Phase { q: usize, theta: f64 },
    /// exp(−iθ/2 Z⊗Z), up to global phase.
    ZZ { a: usize, b: usize, theta: f64 },
    Pauli { q: usize, p: Pauli },
    /// Random non-identity Pauli with probability `p`.
    Depolarize { q: usize, p: f64 },
    /// Z with probability `p`.
    Dephase { q: usize, p: f64 },
    Unitary { q: usize, m: Mat2 },
    CX { c: usize, t: usize },
    Exchange { a: usize, b: usize, e00: C, e11: C, block: Mat2 },
    /// `branch`: the clbit feeds a conditional, so readout errors must be
    /// resolved per trajectory rather than applied to the final counts.
    Measure { q: usize, clbit: usize, eps: f64, branch: bool },
    Cond { clbit: usize, value: u8, op: Box<Op> },
}

#[derive(Debug, Clone)]
pub(crate) struct Program {
    pub n_local: usize,
    pub n_clbits: usize,
    pub ops: Vec<Op>,
}

impl Program {
    pub fn is_coherent(&self) -> bool {
        fn stochastic(op: &Op) -> bool {
            match op {
                Op::Depolarize { .. } | Op::Dephase { .. } => true,
                Op::Cond { op, .. } => stochastic(op),
                _ => false,
            }
        }
        !self.ops.iter().any(stochastic)
    }
}

fn gate_op(gate: &Gate, local: &[Option<usize>]) -> Op {
    let l = |q: usize| local[q].expect("gate qubits are active");
    match *gate {
        Gate::X { qubit } => Op::Pauli { q: l(qubit), p: Pauli::X },
        Gate::Y { qubit } => Op::Pauli { q: l(qubit), p: Pauli::Y },
        Gate::Z { qubit } => Op::Pauli { q: l(qubit), p: Pauli::Z },
        Gate::H { qubit } => Op::Unitary { q: l(qubit), m: gates::h() },
        Gate::SX { qubit } => Op::Unitary { q: l(qubit), m: gates::sx() },
        Gate::RZ { qubit, theta } => Op::Phase { q: l(qubit), theta },
        Gate::RK { qubit, k } => Op::Phase { q: l(qubit), theta: 2.0 * std::f64::consts::PI / (1u64 << k) as f64 },
        Gate::CX { control, target } => Op::CX { c: l(control), t: l(target) },
    }
}

/// Ordering of simultaneous items: readout completes, then pulses, then gates.
const PRIO_MEASURE_END: u8 = 0;
const PRIO_PULSE: u8 = 1;
const PRIO_GATE: u8 = 2;

pub(crate) fn compile(
    sched: &ScheduledCircuit,
    pulses: &[PulseEvent],
    noise: &NoiseParams,
    pulse_error: f64,
) -> Result<Program, SimError> {
    let circuit = &sched.circuit;
    let n = circuit.n_qubits;
    let active = circuit.active_qubits();
    let mut local = vec![None; n];
    for (i, &q) in active.iter().enumerate() {
        local[q] = Some(i);
    }
    let fed_forward: BTreeSet<usize> = circuit
        .instructions
        .iter()
        .filter_map(|i| match i {
            Instruction::Conditional { clbit, .. } => Some(*clbit),
            _ => None,
        })
        .collect();

    let mut windows_by_qubit: Vec<Vec<(Ns, Ns)>> = vec![Vec::new(); n];
    for w in &sched.idle_windows {
        windows_by_qubit[w.qubit].push((w.start, w.end));
    }
    for p in pulses {
        let ok = p.qubit < n && windows_by_qubit[p.qubit].iter().any(|&(s, e)| s <= p.time && p.time <= e);
        if !ok {
            return Err(SimError::PulseOutsideWindow { qubit: p.qubit, time: p.time });
        }
    }

    let mut items: Vec<(Ns, u8, usize, Op)> = Vec::new();
    let mut seq = 0usize;
    let mut push = |items: &mut Vec<(Ns, u8, usize, Op)>, t: Ns, prio: u8, op: Op| {
        items.push((t, prio, seq, op));
        seq += 1;
    };
    for ev in &sched.events {
        match &ev.instruction {
            Instruction::Gate { gate } => push(&mut items, ev.start, PRIO_GATE, gate_op(gate, &local)),
            Instruction::Conditional { gate, clbit, value } => {
                let op = Op::Cond { clbit: *clbit, value: *value, op: Box::new(gate_op(gate, &local)) };
                push(&mut items, ev.start, PRIO_GATE, op)
            }
            Instruction::Measure { qubit, clbit } => {
                let op = Op::Measure {
                    q: local[*qubit].expect("measured qubit is active"),
                    clbit: *clbit,
                    eps: noise.readout(*qubit),
                    branch: fed_forward.contains(clbit),
                };
                push(&mut items, ev.end(), PRIO_MEASURE_END, op)
            }
            Instruction::Delay { .. } | Instruction::Barrier { .. } => {}
        }
    }
    let mut sorted_pulses = pulses.to_vec();
    sorted_pulses.sort();
    for p in &sorted_pulses {
        let q = local[p.qubit].expect("pulsed qubit has a window, so it is active");
        let pauli = p.pulse.pauli();
        if pauli.is_identity() {
            continue;
        }
        push(&mut items, p.time, PRIO_PULSE, Op::Pauli { q, p: pauli });
        if pulse_error > 0.0 {
            push(&mut items, p.time, PRIO_PULSE, Op::Depolarize { q, p: pulse_error });
        }
    }
    items.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));

    let measures = sched.measurements();
    let mut times: BTreeSet<Ns> = items.iter().map(|i| i.0).chain(pulses.iter().map(|p| p.time)).collect();
    for w in &sched.idle_windows {
        times.insert(w.start);
        times.insert(w.end);
    }
    for &(_, s, e) in &measures {
        times.insert(s);
        times.insert(e);
    }
    let times: Vec<Ns> = times.into_iter().collect();

    // dense ν[m][u] over active qubits
    let na = active.len();
    let mut nu = vec![vec![0.0; na]; na];
    for &(m, u, r) in &noise.zphase_rate {
        if let (Some(Some(lm)), Some(Some(lu))) = (local.get(m), local.get(u)) {
            nu[*lm][*lu] += r;
        }
    }
    let zz: Vec<(usize, usize, f64)> = noise
        .zz_rate
        .iter()
        .filter(|t| t.2 != 0.0)
        .filter_map(|&(a, b, r)| Some((local.get(a).copied()??, local.get(b).copied()??, r)))
        .collect();
    let collisions: Vec<(usize, usize, f64, f64)> = noise
        .collision_pairs
        .iter()
        .filter_map(|p| {
            Some((
                local.get(p.measured).copied()??,
                local.get(p.unitary).copied()??,
                mhz_to_rad_per_ns(p.delta_mhz),
                mhz_to_rad_per_ns(p.j_mhz),
            ))
        })
        .collect();
    let t2: Vec<f64> = active.iter().map(|&q| noise.t2(q)).collect();
    let local_windows: Vec<Vec<(Ns, Ns)>> = active.iter().map(|&q| windows_by_qubit[q].clone()).collect();
    let local_measures: Vec<(usize, Ns, Ns)> = measures.iter().map(|&(q, s, e)| (local[q].unwrap(), s, e)).collect();

    let mut ops = Vec::new();
    let mut item_iter = items.into_iter().peekable();
    for (i, &t0) in times.iter().enumerate() {
        while let Some(item) = item_iter.next_if(|it| it.0 == t0) {
            ops.push(item.3);
        }
        let Some(&t1) = times.get(i + 1) else { break };
        let dt = (t1 - t0) as f64;
        let idle: Vec<bool> =
            local_windows.iter().map(|ws| ws.iter().any(|&(s, e)| s <= t0 && t1 <= e)).collect();
        let measuring: Vec<usize> =
            local_measures.iter().filter(|&&(_, s, e)| s <= t0 && t1 <= e).map(|m| m.0).collect();
        let active_collisions: Vec<usize> =
            (0..collisions.len()).filter(|&i| idle[collisions[i].1] && measuring.contains(&collisions[i].0)).collect();
        // A colliding qubit's Z-phase joins the exchange Hamiltonian of its first collision.
        let mut merged_rate = vec![0.0; collisions.len()];
        for u in 0..na {
            if !idle[u] {
                continue;
            }
            let rate: f64 = measuring.iter().map(|&m| nu[m][u]).sum();
            if rate == 0.0 {
                continue;
            }
            match active_collisions.iter().find(|&&i| collisions[i].1 == u) {
                Some(&i) => merged_rate[i] = rate,
                None => ops.push(Op::Phase { q: u, theta: rate * dt }),
            }
        }
        for &(a, b, r) in &zz {
            if idle[a] && idle[b] {
                ops.push(Op::ZZ { a, b, theta: r * dt });
            }
        }
        for &i in &active_collisions {
            let (m, u, delta, j) = collisions[i];
            let (e00, e11, block) = collision_unitary(delta + merged_rate[i], j, dt);
            ops.push(Op::Exchange { a: m, b: u, e00, e11, block });
        }
        for u in 0..na {
            if idle[u] && t2[u] > 0.0 {
                ops.push(Op::Dephase { q: u, p: 1.0 - (-t2[u] * dt).exp() });
            }
        }
    }
    ops.extend(item_iter.map(|i| i.3));

    Ok(Program { n_local: na, n_clbits: circuit.n_clbits, ops })
}
