use serde::{Deserialize, Serialize};

use super::DdError;
use crate::circuit::{DynamicCircuit, Instruction, Ns, ScheduledCircuit};
use crate::device::DeviceModel;

/// A spatiotemporal block `(T_i, R_j)` of a scheduled circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motif {
    /// `(i, j)`, 1-based.
    pub id: (usize, usize),
    /// `[start, end)` in ns.
    pub interval: (Ns, Ns),
    pub register: Vec<usize>,
    /// Instructions starting inside the interval (the last one also takes events
    /// at `T`) that touch only register qubits.
    pub subcircuit: DynamicCircuit,
    pub has_mcm: bool,
}

impl Motif {
    pub fn label(&self) -> String {
        format!("M{}{}", self.id.0, self.id.1)
    }

    pub fn contains_time(&self, t: Ns) -> bool {
        self.interval.0 <= t && t < self.interval.1
    }
}

/// `qubits` cut into `b` contiguous runs, the first `len % b` one longer.
pub fn contiguous_registers(qubits: &[usize], b: usize) -> Vec<Vec<usize>> {
    let b = b.clamp(1, qubits.len().max(1));
    let (base, extra) = (qubits.len() / b, qubits.len() % b);
    let mut out = Vec::with_capacity(b);
    let mut at = 0;
    for i in 0..b {
        let len = base + usize::from(i < extra);
        out.push(qubits[at..at + len].to_vec());
        at += len;
    }
    out
}

/// Splits `[0, T)` into `n_intervals` equal intervals and crosses them with
/// `registers`. Only motifs whose register has a measurement overlapping the
/// interval are returned.
pub fn partition_motifs(
    sched: &ScheduledCircuit,
    n_intervals: usize,
    registers: &[Vec<usize>],
) -> Result<Vec<Motif>, DdError> {
    let n = sched.circuit.n_qubits;
    let mut owner = vec![None; n];
    for (j, reg) in registers.iter().enumerate() {
        for &q in reg {
            if q >= n {
                continue;
            }
            if let Some(prev) = owner[q] {
                return Err(DdError::OverlappingRegisters(prev, j));
            }
            owner[q] = Some(j);
        }
    }
    if let Some(&q) = sched.circuit.active_qubits().iter().find(|&&q| owner[q].is_none()) {
        return Err(DdError::UncoveredQubit(q));
    }
    let a = n_intervals.max(1) as u128;
    let total = sched.total_duration as u128;
    let bound = |i: u128| (i * total / a) as Ns;
    let measures = sched.measurements();

    let mut motifs = Vec::new();
    for i in 0..a {
        let (t0, t1) = (bound(i), bound(i + 1));
        for (j, reg) in registers.iter().enumerate() {
            let has_mcm = measures.iter().any(|&(q, s, e)| reg.contains(&q) && s < t1 && t0 < e);
            if !has_mcm {
                continue;
            }
            let mut sub = DynamicCircuit::new(n, sched.circuit.n_clbits);
            for ev in &sched.events {
                let inside = t0 <= ev.start && (ev.start < t1 || (i + 1 == a && ev.start == t1));
                let qubits = ev.instruction.qubits();
                let local = !qubits.is_empty() && qubits.iter().all(|q| reg.contains(q));
                if inside && local && !matches!(ev.instruction, Instruction::Delay { .. }) {
                    sub.push(ev.instruction.clone());
                }
            }
            motifs.push(Motif {
                id: (i as usize + 1, j + 1),
                interval: (t0, t1),
                register: reg.clone(),
                subcircuit: sub,
                has_mcm,
            });
        }
    }
    Ok(motifs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelConfig {
    /// Correlation range in graph hops.
    pub d_corr: usize,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        Self { d_corr: 4 }
    }
}

fn register_distance(device: &DeviceModel, a: &[usize], b: &[usize]) -> Option<usize> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).filter_map(|(x, y)| device.graph_distance(x, y)).min()
}

/// Greedy first-fit grouping of motifs that can be trained simultaneously.
/// Two motifs share a group only if the correlation neighbourhoods of their
/// registers do not meet, i.e. their separation exceeds `2 * d_corr`.
pub fn parallel_groups(motifs: &[Motif], device: &DeviceModel, cfg: &ParallelConfig) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, m) in motifs.iter().enumerate() {
        let fits = |g: &Vec<usize>| {
            g.iter().all(|&o| match register_distance(device, &m.register, &motifs[o].register) {
                Some(d) => d > 2 * cfg.d_corr,
                None => true,
            })
        };
        match groups.iter_mut().find(|g| fits(g)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

/// Motif index responsible for each idle window of `sched`, by the register of
/// the window's qubit. Among several motifs on that register the one whose
/// interval holds the window midpoint wins, otherwise the nearest in time.
/// Qubits outside every motif register fall back to the register of the
/// nearest measured qubit.
pub fn assign_windows(sched: &ScheduledCircuit, motifs: &[Motif], device: &DeviceModel) -> Vec<Option<usize>> {
    let pick = |q: usize, mid: Ns| -> Option<usize> {
        motifs
            .iter()
            .enumerate()
            .filter(|(_, m)| m.register.contains(&q))
            .min_by_key(|(i, m)| {
                let gap = if m.contains_time(mid) {
                    0
                } else if mid < m.interval.0 {
                    m.interval.0 - mid
                } else {
                    mid + 1 - m.interval.1
                };
                (gap, *i)
            })
            .map(|(i, _)| i)
    };
    sched
        .idle_windows
        .iter()
        .map(|w| {
            let mid = w.start + (w.end - w.start) / 2;
            pick(w.qubit, mid).or_else(|| {
                let dist = device.distances_from(w.qubit);
                w.context
                    .measured_qubits
                    .iter()
                    .filter_map(|&m| Some((dist.get(m).copied()??, m)))
                    .min()
                    .and_then(|(_, m)| pick(m, mid))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_schedule, Gate};

    fn measure_layers(n: usize, regs: usize) -> DynamicCircuit {
        // register r measures one qubit after r earlier measurements finish
        let size = n / regs;
        let mut c = DynamicCircuit::new(n, regs);
        for r in 0..regs {
            let q = r * size;
            c.gate(Gate::H { qubit: q });
            c.measure(q, r);
            for p in 0..n {
                if p != q {
                    c.conditional(Gate::RZ { qubit: p, theta: 0.1 }, r, 1);
                }
            }
        }
        c
    }

    #[test]
    fn no_measurement_no_motifs() {
        let mut c = DynamicCircuit::new(3, 0);
        c.gate(Gate::H { qubit: 0 }).gate(Gate::CX { control: 0, target: 1 });
        let dev = DeviceModel::chain(3);
        let s = build_schedule(&c, &dev.timing).unwrap();
        assert!(partition_motifs(&s, 2, &[vec![0, 1, 2]]).unwrap().is_empty());
    }

    #[test]
    fn single_block_is_whole_circuit() {
        let mut c = DynamicCircuit::new(2, 1);
        c.gate(Gate::H { qubit: 0 }).measure(0, 0).conditional(Gate::X { qubit: 1 }, 0, 1);
        let dev = DeviceModel::chain(2);
        let s = build_schedule(&c, &dev.timing).unwrap();
        let m = partition_motifs(&s, 1, &[vec![0, 1]]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].interval, (0, s.total_duration));
        assert_eq!(m[0].subcircuit.instructions, c.instructions);
    }

    #[test]
    fn contiguous_split() {
        let q: Vec<usize> = (0..30).collect();
        let r = contiguous_registers(&q, 6);
        assert_eq!(r.len(), 6);
        assert!(r.iter().all(|x| x.len() == 5));
        assert_eq!(r[1], vec![5, 6, 7, 8, 9]);
        let r = contiguous_registers(&[3, 4, 5, 6, 7], 2);
        assert_eq!(r, vec![vec![3, 4, 5], vec![6, 7]]);
        assert_eq!(contiguous_registers(&[1, 2], 5).len(), 2);
    }

    #[test]
    fn overlapping_registers_rejected() {
        let c = measure_layers(4, 2);
        let s = build_schedule(&c, &DeviceModel::chain(4).timing).unwrap();
        assert_eq!(partition_motifs(&s, 2, &[vec![0, 1], vec![1, 2, 3]]), Err(DdError::OverlappingRegisters(0, 1)));
        assert_eq!(partition_motifs(&s, 2, &[vec![0, 1], vec![2]]), Err(DdError::UncoveredQubit(3)));
    }

    #[test]
    fn sequential_layers_give_diagonal_motifs() {
        let c = measure_layers(12, 3);
        let dev = DeviceModel::chain(12);
        let s = build_schedule(&c, &dev.timing).unwrap();
        let regs: Vec<Vec<usize>> = (0..3).map(|r| (r * 4..r * 4 + 4).collect()).collect();
        let m = partition_motifs(&s, 3, &regs).unwrap();
        let ids: Vec<_> = m.iter().map(|m| m.id).collect();
        assert_eq!(ids, vec![(1, 1), (2, 2), (3, 3)]);
        assert!(m.iter().all(|m| m.has_mcm));
    }

    fn motif(id: usize, register: Vec<usize>) -> Motif {
        Motif { id: (id, id), interval: (0, 1), register, subcircuit: DynamicCircuit::new(0, 0), has_mcm: true }
    }

    #[test]
    fn chain_thirty_pairs_far_registers() {
        let dev = DeviceModel::chain(30);
        let motifs: Vec<Motif> = (0..6).map(|r| motif(r + 1, (r * 5..r * 5 + 5).collect())).collect();
        let groups = parallel_groups(&motifs, &dev, &ParallelConfig::default());
        assert_eq!(groups, vec![vec![0, 3], vec![1, 4], vec![2, 5]]);
    }

    #[test]
    fn adjacent_registers_split_and_singletons() {
        let dev = DeviceModel::chain(10);
        let motifs = vec![motif(1, vec![0, 1, 2, 3, 4]), motif(2, vec![5, 6, 7, 8, 9])];
        assert_eq!(parallel_groups(&motifs, &dev, &ParallelConfig::default()), vec![vec![0], vec![1]]);
        assert_eq!(parallel_groups(&motifs[..1], &dev, &ParallelConfig::default()), vec![vec![0]]);
    }

    #[test]
    fn windows_follow_their_register() {
        let c = measure_layers(8, 2);
        let dev = DeviceModel::chain(8);
        let s = build_schedule(&c, &dev.timing).unwrap();
        let regs = vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]];
        let motifs = partition_motifs(&s, 2, &regs).unwrap();
        let owner = assign_windows(&s, &motifs, &dev);
        for (w, o) in s.idle_windows.iter().zip(owner) {
            let o = o.expect("every window assigned");
            assert!(motifs[o].register.contains(&w.qubit));
        }
    }
}
