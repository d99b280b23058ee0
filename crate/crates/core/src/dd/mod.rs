//! DD sequences and strategies, motif partitioning, idle-window coloring and
//! pulse scheduling.

mod apply;
mod motif;
mod pad;

pub use apply::{dd_pulses, dd_pulses_with, DdMode};
pub use motif::{assign_windows, contiguous_registers, parallel_groups, partition_motifs, Motif, ParallelConfig};
pub use pad::{
    baseline_pulses, color_windows, pad_baseline, pad_strategy, schedule_sequence, BaselineConfig, BaselineKind,
    Coloring, PadMode,
};
pub use crate::sim::PulseLabel;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::Ns;
use crate::sim::Pauli;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DdError {
    #[error("registers {0} and {1} overlap")]
    OverlappingRegisters(usize, usize),
    #[error("registers do not cover active qubit {0}")]
    UncoveredQubit(usize),
    #[error("window on qubit {qubit} [{start}, {end}) cannot hold {len} pulses")]
    WindowTooShort { qubit: usize, start: u64, end: u64, len: usize },
    #[error("idle window on qubit {qubit} at {start} belongs to no motif")]
    UnassignedWindow { qubit: usize, start: u64 },
    #[error("no strategy for motif {0}")]
    MissingStrategy(usize),
    #[error("strategy has {got} sequences of lengths {lens:?}; expected k={k}, L={l}")]
    Shape { k: usize, l: usize, got: usize, lens: Vec<usize> },
}

/// Ordered pulses for one idle window.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DdSequence {
    pub pulses: Vec<PulseLabel>,
}

impl DdSequence {
    pub fn new(pulses: Vec<PulseLabel>) -> Self {
        Self { pulses }
    }

    pub fn identity(l: usize) -> Self {
        Self { pulses: vec![PulseLabel::Ip; l] }
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// Product of all pulses, up to phase.
    pub fn pauli_product(&self) -> Pauli {
        self.pulses.iter().fold(Pauli::I, |acc, p| acc.compose(p.pauli()))
    }

    /// The same sequence with its last pulse replaced so the whole product is
    /// the identity. The last pulse keeps its label when it already does so.
    pub fn frame_corrected(&self) -> DdSequence {
        let Some((last, head)) = self.pulses.split_last() else { return self.clone() };
        let needed = head.iter().fold(Pauli::I, |acc, p| acc.compose(p.pauli()));
        let mut pulses = self.pulses.clone();
        if last.pauli() != needed {
            *pulses.last_mut().unwrap() = PulseLabel::from_pauli(needed);
        }
        DdSequence { pulses }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        text.split_whitespace().map(str::parse).collect::<Result<_, _>>().map(Self::new)
    }
}

impl std::fmt::Display for DdSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let words: Vec<&str> = self.pulses.iter().map(|p| p.as_str()).collect();
        f.write_str(&words.join(" "))
    }
}

/// `I_p` six times then `X_p X_p` (for L = 8); used on collision-flagged windows.
pub fn constrained_collision_sequence(l: usize) -> DdSequence {
    assert!(l >= 2, "constrained sequence needs at least two pulses");
    let mut pulses = vec![PulseLabel::Ip; l - 2];
    pulses.extend([PulseLabel::Xp, PulseLabel::Xp]);
    DdSequence { pulses }
}

/// One sequence per color.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DdStrategy {
    pub sequences: Vec<DdSequence>,
}

#[derive(Serialize, Deserialize)]
struct StrategyFile {
    #[serde(rename = "L")]
    l: usize,
    k: usize,
    sequences: Vec<DdSequence>,
}

impl Serialize for DdStrategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        StrategyFile { l: self.l(), k: self.k(), sequences: self.sequences.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DdStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = StrategyFile::deserialize(d)?;
        let strategy = DdStrategy { sequences: f.sequences };
        strategy.check_shape(f.k, f.l).map_err(serde::de::Error::custom)?;
        Ok(strategy)
    }
}

impl DdStrategy {
    pub fn new(sequences: Vec<DdSequence>) -> Self {
        Self { sequences }
    }

    pub fn k(&self) -> usize {
        self.sequences.len()
    }

    pub fn l(&self) -> usize {
        self.sequences.first().map_or(0, DdSequence::len)
    }

    pub fn sequence(&self, color: usize) -> &DdSequence {
        &self.sequences[color % self.k()]
    }

    pub fn check_shape(&self, k: usize, l: usize) -> Result<(), DdError> {
        if k == 0 || self.k() != k || self.sequences.iter().any(|s| s.len() != l) {
            return Err(DdError::Shape {
                k,
                l,
                got: self.k(),
                lens: self.sequences.iter().map(DdSequence::len).collect(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("strategy serializes")
    }
}

/// Learned strategies keyed by motif, as written to `strategies.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySet {
    pub motifs: Vec<MotifStrategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifStrategy {
    /// `(interval, register)`, 1-based as in M_ij.
    pub motif: (usize, usize),
    pub interval: (Ns, Ns),
    pub register: Vec<usize>,
    pub strategy: DdStrategy,
    pub utility: f64,
}

impl StrategySet {
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.as_ref().display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("strategy set serializes")
    }

    pub fn strategies(&self) -> Vec<DdStrategy> {
        self.motifs.iter().map(|m| m.strategy.clone()).collect()
    }

    /// Index of the motif with the highest training utility, lowest index on ties.
    pub fn best_motif(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.motifs.iter().enumerate() {
            if m.utility > self.motifs[best].utility {
                best = i;
            }
        }
        best
    }

    pub fn as_motifs(&self) -> Vec<Motif> {
        self.motifs
            .iter()
            .map(|m| Motif {
                id: m.motif,
                interval: m.interval,
                register: m.register.clone(),
                subcircuit: crate::circuit::DynamicCircuit::new(0, 0),
                has_mcm: true,
            })
            .collect()
    }
}
