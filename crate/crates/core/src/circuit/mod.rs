//! Dynamic-circuit data model: gates, mid-circuit measurements, classically
//! conditioned operations and timing primitives.

mod schedule;

pub use schedule::{build_schedule, Event, IdleWindow, ScheduleError, ScheduledCircuit, WindowContext};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Nanoseconds. All schedule arithmetic is integral.
pub type Ns = u64;

/// Supported gate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum Gate {
    X { qubit: usize },
    Y { qubit: usize },
    Z { qubit: usize },
    H { qubit: usize },
    SX { qubit: usize },
    RZ { qubit: usize, theta: f64 },
    /// `diag(1, exp(2πi / 2^k))`
    RK { qubit: usize, k: u32 },
    CX { control: usize, target: usize },
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self {
            Gate::X { .. } => "X",
            Gate::Y { .. } => "Y",
            Gate::Z { .. } => "Z",
            Gate::H { .. } => "H",
            Gate::SX { .. } => "SX",
            Gate::RZ { .. } => "RZ",
            Gate::RK { .. } => "RK",
            Gate::CX { .. } => "CX",
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::X { qubit }
            | Gate::Y { qubit }
            | Gate::Z { qubit }
            | Gate::H { qubit }
            | Gate::SX { qubit }
            | Gate::RZ { qubit, .. }
            | Gate::RK { qubit, .. } => vec![qubit],
            Gate::CX { control, target } => vec![control, target],
        }
    }

    /// Same gate moved onto other qubits via `map`.
    pub fn remapped(&self, map: impl Fn(usize) -> usize) -> Gate {
        match *self {
            Gate::X { qubit } => Gate::X { qubit: map(qubit) },
            Gate::Y { qubit } => Gate::Y { qubit: map(qubit) },
            Gate::Z { qubit } => Gate::Z { qubit: map(qubit) },
            Gate::H { qubit } => Gate::H { qubit: map(qubit) },
            Gate::SX { qubit } => Gate::SX { qubit: map(qubit) },
            Gate::RZ { qubit, theta } => Gate::RZ { qubit: map(qubit), theta },
            Gate::RK { qubit, k } => Gate::RK { qubit: map(qubit), k },
            Gate::CX { control, target } => Gate::CX { control: map(control), target: map(target) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instruction {
    Gate { gate: Gate },
    Measure { qubit: usize, clbit: usize },
    /// Applied iff the recorded value of `clbit` equals `value`.
    Conditional { gate: Gate, clbit: usize, value: u8 },
    Delay { qubit: usize, duration: Ns },
    Barrier { qubits: Vec<usize> },
}

impl Instruction {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Instruction::Gate { gate } | Instruction::Conditional { gate, .. } => gate.qubits(),
            Instruction::Measure { qubit, .. } | Instruction::Delay { qubit, .. } => vec![*qubit],
            Instruction::Barrier { qubits } => qubits.clone(),
        }
    }

    pub fn remapped(&self, qmap: impl Fn(usize) -> usize, cmap: impl Fn(usize) -> usize) -> Instruction {
        match self {
            Instruction::Gate { gate } => Instruction::Gate { gate: gate.remapped(qmap) },
            Instruction::Measure { qubit, clbit } => Instruction::Measure { qubit: qmap(*qubit), clbit: cmap(*clbit) },
            Instruction::Conditional { gate, clbit, value } => Instruction::Conditional {
                gate: gate.remapped(qmap),
                clbit: cmap(*clbit),
                value: *value,
            },
            Instruction::Delay { qubit, duration } => Instruction::Delay { qubit: qmap(*qubit), duration: *duration },
            Instruction::Barrier { qubits } => Instruction::Barrier { qubits: qubits.iter().map(|&q| qmap(q)).collect() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicCircuit {
    pub n_qubits: usize,
    pub n_clbits: usize,
    pub instructions: Vec<Instruction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    QubitOutOfRange { index: usize, qubit: usize },
    ClbitOutOfRange { index: usize, clbit: usize },
    UnwrittenClbit { index: usize, clbit: usize },
    RepeatedQubit { index: usize, qubit: usize },
    BadRkOrder { index: usize },
    BadConditionValue { index: usize, value: u8 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::QubitOutOfRange { index, qubit } => write!(f, "instruction {index}: qubit out of range ({qubit})"),
            Violation::ClbitOutOfRange { index, clbit } => write!(f, "instruction {index}: clbit out of range ({clbit})"),
            Violation::UnwrittenClbit { index, clbit } => write!(f, "instruction {index}: unwritten clbit {clbit}"),
            Violation::RepeatedQubit { index, qubit } => write!(f, "instruction {index}: qubit {qubit} used twice"),
            Violation::BadRkOrder { index } => write!(f, "instruction {index}: RK requires k >= 1"),
            Violation::BadConditionValue { index, value } => write!(f, "instruction {index}: condition value {value} is not a bit"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CircuitIoError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{path}: invalid circuit: {violations}")]
    Invalid { path: String, violations: String },
}

impl DynamicCircuit {
    pub fn new(n_qubits: usize, n_clbits: usize) -> Self {
        Self { n_qubits, n_clbits, instructions: Vec::new() }
    }

    pub fn push(&mut self, inst: Instruction) -> &mut Self {
        self.instructions.push(inst);
        self
    }

    pub fn gate(&mut self, gate: Gate) -> &mut Self {
        self.push(Instruction::Gate { gate })
    }

    pub fn measure(&mut self, qubit: usize, clbit: usize) -> &mut Self {
        self.push(Instruction::Measure { qubit, clbit })
    }

    pub fn conditional(&mut self, gate: Gate, clbit: usize, value: u8) -> &mut Self {
        self.push(Instruction::Conditional { gate, clbit, value })
    }

    pub fn delay(&mut self, qubit: usize, duration: Ns) -> &mut Self {
        self.push(Instruction::Delay { qubit, duration })
    }

    pub fn barrier(&mut self, qubits: impl IntoIterator<Item = usize>) -> &mut Self {
        self.push(Instruction::Barrier { qubits: qubits.into_iter().collect() })
    }

    /// Append `other`, remapping its qubits and offsetting its clbits.
    pub fn append_mapped(&mut self, other: &DynamicCircuit, qubit_map: &[usize], clbit_offset: usize) {
        for inst in &other.instructions {
            self.instructions.push(inst.remapped(|q| qubit_map[q], |c| c + clbit_offset));
        }
    }

    /// Qubits touched by at least one instruction, ascending.
    pub fn active_qubits(&self) -> Vec<usize> {
        let mut used = vec![false; self.n_qubits];
        for inst in &self.instructions {
            if matches!(inst, Instruction::Barrier { .. }) {
                continue;
            }
            for q in inst.qubits() {
                if q < self.n_qubits {
                    used[q] = true;
                }
            }
        }
        (0..self.n_qubits).filter(|&q| used[q]).collect()
    }

    pub fn n_measurements(&self) -> usize {
        self.instructions.iter().filter(|i| matches!(i, Instruction::Measure { .. })).count()
    }

    /// All invariant violations; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut written = vec![false; self.n_clbits];
        for (index, inst) in self.instructions.iter().enumerate() {
            let qs = inst.qubits();
            for (i, &q) in qs.iter().enumerate() {
                if q >= self.n_qubits {
                    out.push(Violation::QubitOutOfRange { index, qubit: q });
                }
                if qs[..i].contains(&q) {
                    out.push(Violation::RepeatedQubit { index, qubit: q });
                }
            }
            if let Instruction::Gate { gate: Gate::RK { k, .. } } | Instruction::Conditional { gate: Gate::RK { k, .. }, .. } = inst {
                if *k == 0 {
                    out.push(Violation::BadRkOrder { index });
                }
            }
            match *inst {
                Instruction::Measure { clbit, .. } => {
                    if clbit >= self.n_clbits {
                        out.push(Violation::ClbitOutOfRange { index, clbit });
                    } else {
                        written[clbit] = true;
                    }
                }
                Instruction::Conditional { clbit, value, .. } => {
                    if value > 1 {
                        out.push(Violation::BadConditionValue { index, value });
                    }
                    if clbit >= self.n_clbits {
                        out.push(Violation::ClbitOutOfRange { index, clbit });
                    } else if !written[clbit] {
                        out.push(Violation::UnwrittenClbit { index, clbit });
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CircuitIoError> {
        let path_s = path.as_ref().display().to_string();
        let text = std::fs::read_to_string(&path).map_err(|source| CircuitIoError::Io { path: path_s.clone(), source })?;
        let circuit = Self::from_json(&text).map_err(|source| CircuitIoError::Parse { path: path_s.clone(), source })?;
        let violations = circuit.validate();
        if !violations.is_empty() {
            let violations = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return Err(CircuitIoError::Invalid { path: path_s, violations });
        }
        Ok(circuit)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unwritten_clbit_is_reported() {
        let mut c = DynamicCircuit::new(5, 4);
        c.conditional(Gate::Z { qubit: 1 }, 3, 1);
        let v = c.validate();
        assert_eq!(v, vec![Violation::UnwrittenClbit { index: 0, clbit: 3 }]);
        assert!(v[0].to_string().contains("unwritten clbit"));
    }

    #[test]
    fn qubit_out_of_range_is_reported() {
        let mut c = DynamicCircuit::new(5, 0);
        c.gate(Gate::X { qubit: 7 });
        let v = c.validate();
        assert_eq!(v, vec![Violation::QubitOutOfRange { index: 0, qubit: 7 }]);
        assert!(v[0].to_string().contains("qubit out of range"));
    }

    #[test]
    fn conditional_after_measure_is_valid() {
        let mut c = DynamicCircuit::new(2, 1);
        c.measure(0, 0).conditional(Gate::Z { qubit: 1 }, 0, 1);
        assert!(c.validate().is_empty());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut c = DynamicCircuit::new(3, 2);
        c.gate(Gate::H { qubit: 0 })
            .gate(Gate::RZ { qubit: 1, theta: -0.1234567891234 })
            .gate(Gate::CX { control: 0, target: 2 })
            .measure(0, 0)
            .conditional(Gate::RK { qubit: 1, k: 3 }, 0, 1)
            .delay(2, 600)
            .barrier([0, 1, 2])
            .measure(1, 1);
        let text = c.to_json();
        assert!(text.contains("\"kind\": \"conditional\""));
        assert_eq!(DynamicCircuit::from_json(&text).unwrap(), c);
    }
}
