use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Exact probabilities keyed by bitstring (clbit 0 leftmost).
pub type ExactDistribution = BTreeMap<String, f64>;

/// Sampled counts keyed by bitstring (clbit 0 leftmost).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub counts: BTreeMap<String, u64>,
    pub shots: u64,
}

impl OutcomeDistribution {
    pub fn add(&mut self, key: String, n: u64) {
        *self.counts.entry(key).or_insert(0) += n;
        self.shots += n;
    }

    pub fn merge(&mut self, other: OutcomeDistribution) {
        for (k, n) in other.counts {
            *self.counts.entry(k).or_insert(0) += n;
        }
        self.shots += other.shots;
    }

    pub fn probability(&self, key: &str) -> f64 {
        if self.shots == 0 {
            return 0.0;
        }
        self.counts.get(key).copied().unwrap_or(0) as f64 / self.shots as f64
    }

    pub fn probabilities(&self) -> ExactDistribution {
        self.counts.keys().map(|k| (k.clone(), self.probability(k))).collect()
    }

    /// Counts over the listed clbits, in the listed order.
    pub fn marginal(&self, bits: &[usize]) -> OutcomeDistribution {
        let mut out = OutcomeDistribution::default();
        for (k, &n) in &self.counts {
            out.add(select_bits(k, bits), n);
        }
        out
    }

    /// Probability that clbit `bit` reads 0.
    pub fn prob_zero(&self, bit: usize) -> f64 {
        if self.shots == 0 {
            return 0.0;
        }
        let zeros: u64 = self.counts.iter().filter(|(k, _)| k.as_bytes()[bit] == b'0').map(|(_, n)| n).sum();
        zeros as f64 / self.shots as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("distribution serializes")
    }
}

pub fn select_bits(key: &str, bits: &[usize]) -> String {
    let b = key.as_bytes();
    bits.iter().map(|&i| b[i] as char).collect()
}

/// Marginal of an exact distribution over the listed clbits.
pub fn marginal_exact(dist: &ExactDistribution, bits: &[usize]) -> ExactDistribution {
    let mut out = ExactDistribution::new();
    for (k, &p) in dist {
        *out.entry(select_bits(k, bits)).or_insert(0.0) += p;
    }
    out
}

/// Total-variation distance ½Σ|p − q|.
pub fn total_variation(p: &ExactDistribution, q: &ExactDistribution) -> f64 {
    let mut keys: Vec<&String> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Integer value of a bitstring read with clbit `i` as bit `i`.
pub fn key_value_lsb_first(key: &str) -> usize {
    key.bytes().enumerate().filter(|(_, b)| *b == b'1').map(|(i, _)| 1usize << i).sum()
}

/// Bitstring of `value` over `n` clbits with clbit `i` holding bit `i`.
pub fn key_from_value_lsb_first(value: usize, n: usize) -> String {
    (0..n).map(|i| if value >> i & 1 == 1 { '1' } else { '0' }).collect()
}
