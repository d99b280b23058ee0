//! As-soon-as-possible timing of dynamic circuits and idle-window extraction.
//!
//! Gates start when all their qubits are free. A measurement occupies its qubit
//! for `tau_m`; a conditional operation waits an additional `tau_ff` after the
//! measurement that wrote its bit and takes no time itself. Idle gaps on each
//! active qubit are cut at the start of every other-qubit measurement and at
//! the end of its feedforward period, so each DD window lines up with one
//! measurement layer.

use serde::{Deserialize, Serialize};

use super::{DynamicCircuit, Instruction, Ns};
use crate::device::DeviceTiming;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start: Ns,
    pub duration: Ns,
    /// Position of the instruction in the source circuit.
    pub index: usize,
    pub instruction: Instruction,
}

impl Event {
    pub fn end(&self) -> Ns {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowContext {
    pub during_mcm: bool,
    /// Nearest-index measured qubit, if any measurement overlaps the window.
    pub measured_qubit: Option<usize>,
    /// All other-qubit measurements overlapping the window.
    pub measured_qubits: Vec<usize>,
    /// End of the overlapping measurement(s), clipped to the window end.
    pub ff_boundary: Option<Ns>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdleWindow {
    pub qubit: usize,
    pub start: Ns,
    pub end: Ns,
    pub context: WindowContext,
}

impl IdleWindow {
    pub fn len(&self) -> Ns {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, t: Ns) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledCircuit {
    pub circuit: DynamicCircuit,
    pub events: Vec<Event>,
    pub idle_windows: Vec<IdleWindow>,
    pub total_duration: Ns,
    pub tau_m: Ns,
    pub tau_ff: Ns,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("no duration configured for gate {0}")]
    UnknownGateDuration(String),
    #[error("instruction {index} reads clbit {clbit} before any measurement writes it")]
    CyclicDependency { index: usize, clbit: usize },
    #[error("invalid circuit: {0}")]
    Invalid(String),
}

pub fn build_schedule(circuit: &DynamicCircuit, timing: &DeviceTiming) -> Result<ScheduledCircuit, ScheduleError> {
    let mut ready = vec![0 as Ns; circuit.n_qubits];
    let mut clbit_ready: Vec<Option<Ns>> = vec![None; circuit.n_clbits];
    let mut events = Vec::with_capacity(circuit.instructions.len());

    for (index, inst) in circuit.instructions.iter().enumerate() {
        for q in inst.qubits() {
            if q >= circuit.n_qubits {
                return Err(ScheduleError::Invalid(format!("instruction {index}: qubit {q} out of range")));
            }
        }
        match inst {
            Instruction::Gate { gate } => {
                let duration = timing
                    .gate_duration(gate.name())
                    .ok_or_else(|| ScheduleError::UnknownGateDuration(gate.name().to_string()))?;
                let qs = gate.qubits();
                let start = qs.iter().map(|&q| ready[q]).max().unwrap_or(0);
                for &q in &qs {
                    ready[q] = start + duration;
                }
                events.push(Event { start, duration, index, instruction: inst.clone() });
            }
            Instruction::Measure { qubit, clbit } => {
                if *clbit >= circuit.n_clbits {
                    return Err(ScheduleError::Invalid(format!("instruction {index}: clbit {clbit} out of range")));
                }
                let start = ready[*qubit];
                ready[*qubit] = start + timing.tau_m;
                clbit_ready[*clbit] = Some(start + timing.tau_m + timing.tau_ff);
                events.push(Event { start, duration: timing.tau_m, index, instruction: inst.clone() });
            }
            Instruction::Conditional { gate, clbit, .. } => {
                let avail = clbit_ready
                    .get(*clbit)
                    .copied()
                    .flatten()
                    .ok_or(ScheduleError::CyclicDependency { index, clbit: *clbit })?;
                let qs = gate.qubits();
                let start = qs.iter().map(|&q| ready[q]).max().unwrap_or(0).max(avail);
                for &q in &qs {
                    ready[q] = start;
                }
                events.push(Event { start, duration: 0, index, instruction: inst.clone() });
            }
            Instruction::Delay { qubit, duration } => {
                let start = ready[*qubit];
                ready[*qubit] = start + duration;
                events.push(Event { start, duration: *duration, index, instruction: inst.clone() });
            }
            Instruction::Barrier { qubits } => {
                let t = qubits.iter().map(|&q| ready[q]).max().unwrap_or(0);
                for &q in qubits {
                    ready[q] = t;
                }
            }
        }
    }

    let total_duration = events.iter().map(Event::end).max().unwrap_or(0);
    let idle_windows = idle_windows(circuit, &events, total_duration, timing.tau_ff);
    Ok(ScheduledCircuit {
        circuit: circuit.clone(),
        events,
        idle_windows,
        total_duration,
        tau_m: timing.tau_m,
        tau_ff: timing.tau_ff,
    })
}

fn idle_windows(circuit: &DynamicCircuit, events: &[Event], total: Ns, tau_ff: Ns) -> Vec<IdleWindow> {
    // (qubit, start, end) of every measurement
    let measures: Vec<(usize, Ns, Ns)> = events
        .iter()
        .filter_map(|e| match e.instruction {
            Instruction::Measure { qubit, .. } => Some((qubit, e.start, e.end())),
            _ => None,
        })
        .collect();

    let mut windows = Vec::new();
    for q in circuit.active_qubits() {
        let mut busy: Vec<(Ns, Ns)> = events
            .iter()
            .filter(|e| !matches!(e.instruction, Instruction::Delay { .. }) && e.instruction.qubits().contains(&q))
            .map(|e| (e.start, e.end()))
            .collect();
        busy.sort_unstable();

        let mut gaps = Vec::new();
        let mut cursor = 0;
        for (s, e) in busy {
            if s > cursor {
                gaps.push((cursor, s));
            }
            cursor = cursor.max(e);
        }
        if cursor < total {
            gaps.push((cursor, total));
        }

        for (gs, ge) in gaps {
            let mut cuts: Vec<Ns> = measures
                .iter()
                .filter(|m| m.0 != q)
                .flat_map(|&(_, ms, me)| [ms, me + tau_ff])
                .filter(|&t| t > gs && t < ge)
                .collect();
            cuts.push(gs);
            cuts.push(ge);
            cuts.sort_unstable();
            cuts.dedup();
            for pair in cuts.windows(2) {
                let (start, end) = (pair[0], pair[1]);
                let overlapping: Vec<&(usize, Ns, Ns)> =
                    measures.iter().filter(|m| m.0 != q && m.1 < end && m.2 > start).collect();
                let mut measured_qubits: Vec<usize> = overlapping.iter().map(|m| m.0).collect();
                measured_qubits.sort_unstable();
                measured_qubits.dedup();
                let ff_boundary = overlapping.iter().map(|m| m.2).max().map(|me| me.min(end));
                windows.push(IdleWindow {
                    qubit: q,
                    start,
                    end,
                    context: WindowContext {
                        during_mcm: !overlapping.is_empty(),
                        measured_qubit: measured_qubits.first().copied(),
                        measured_qubits,
                        ff_boundary,
                    },
                });
            }
        }
    }
    windows
}

impl ScheduledCircuit {
    pub fn windows_during_mcm(&self) -> impl Iterator<Item = &IdleWindow> {
        self.idle_windows.iter().filter(|w| w.context.during_mcm)
    }

    /// `(qubit, start, end)` of each measurement event.
    pub fn measurements(&self) -> Vec<(usize, Ns, Ns)> {
        self.events
            .iter()
            .filter_map(|e| match e.instruction {
                Instruction::Measure { qubit, .. } => Some((qubit, e.start, e.end())),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Gate;

    fn timing() -> DeviceTiming {
        DeviceTiming::default()
    }

    #[test]
    fn single_measure_layout() {
        let mut c = DynamicCircuit::new(2, 1);
        c.measure(0, 0).conditional(Gate::Z { qubit: 1 }, 0, 1);
        let s = build_schedule(&c, &timing()).unwrap();
        let w: Vec<_> = s.idle_windows.iter().filter(|w| w.qubit == 1).collect();
        assert_eq!(w.len(), 1);
        assert_eq!((w[0].start, w[0].end), (0, 1600));
        assert!(w[0].context.during_mcm);
        assert_eq!(w[0].context.ff_boundary, Some(1000));
        assert_eq!(w[0].context.measured_qubit, Some(0));
        assert_eq!(s.events[1].start, 1600);
        assert_eq!(s.events[1].duration, 0);
    }

    #[test]
    fn empty_circuit() {
        let s = build_schedule(&DynamicCircuit::new(3, 0), &timing()).unwrap();
        assert!(s.events.is_empty());
        assert!(s.idle_windows.is_empty());
        assert_eq!(s.total_duration, 0);
    }

    #[test]
    fn conditional_on_unwritten_bit_is_cyclic() {
        let mut c = DynamicCircuit::new(2, 1);
        c.conditional(Gate::X { qubit: 1 }, 0, 1);
        assert_eq!(build_schedule(&c, &timing()), Err(ScheduleError::CyclicDependency { index: 0, clbit: 0 }));
    }

    #[test]
    fn unknown_gate_duration() {
        let mut t = timing();
        t.durations.remove("SX");
        let mut c = DynamicCircuit::new(1, 0);
        c.gate(Gate::SX { qubit: 0 });
        assert_eq!(build_schedule(&c, &t), Err(ScheduleError::UnknownGateDuration("SX".into())));
    }

    #[test]
    fn critical_path_of_small_circuits() {
        // H(0) -> CX(0,1) -> X(1): 50 + 570 + 50
        let mut c = DynamicCircuit::new(2, 0);
        c.gate(Gate::H { qubit: 0 }).gate(Gate::CX { control: 0, target: 1 }).gate(Gate::X { qubit: 1 });
        assert_eq!(build_schedule(&c, &timing()).unwrap().total_duration, 670);

        // H(0), X(1), Measure(0): independent chains, max(50 + 1000, 50)
        let mut c = DynamicCircuit::new(2, 1);
        c.gate(Gate::H { qubit: 0 }).gate(Gate::X { qubit: 1 }).measure(0, 0);
        assert_eq!(build_schedule(&c, &timing()).unwrap().total_duration, 1050);

        // Measure(0), cond X(1), H(1): 1000 + 600 + 0 + 50
        let mut c = DynamicCircuit::new(2, 1);
        c.measure(0, 0).conditional(Gate::X { qubit: 1 }, 0, 1).gate(Gate::H { qubit: 1 });
        assert_eq!(build_schedule(&c, &timing()).unwrap().total_duration, 1650);
    }

    #[test]
    fn windows_split_at_each_measurement_layer() {
        // q2 idles across two measurement layers on q0 and q1.
        let mut c = DynamicCircuit::new(3, 2);
        c.gate(Gate::H { qubit: 2 })
            .measure(0, 0)
            .conditional(Gate::X { qubit: 1 }, 0, 1)
            .measure(1, 1)
            .conditional(Gate::Z { qubit: 2 }, 1, 1);
        let s = build_schedule(&c, &timing()).unwrap();
        let w: Vec<_> = s.idle_windows.iter().filter(|w| w.qubit == 2).collect();
        // measure q0 [0,1000) -> cut at 0 (gap starts at 50) and 1600; measure q1 [1600,2600) -> cut at 1600, 3200
        let spans: Vec<_> = w.iter().map(|w| (w.start, w.end, w.context.measured_qubit)).collect();
        assert_eq!(spans, vec![(50, 1600, Some(0)), (1600, 3200, Some(1))]);
        assert_eq!(w[1].context.ff_boundary, Some(2600));
    }

    #[test]
    fn scheduling_is_deterministic() {
        let mut c = DynamicCircuit::new(3, 2);
        c.gate(Gate::H { qubit: 0 }).measure(0, 0).conditional(Gate::RK { qubit: 1, k: 2 }, 0, 1).measure(1, 1);
        assert_eq!(build_schedule(&c, &timing()).unwrap(), build_schedule(&c, &timing()).unwrap());
    }
}
