use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::state::StateVector;
use crate::circuit::Ns;

/// The eight DD pulse labels. `_p`/`_m` are the two rotation directions; both
/// act as the same ideal Pauli.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PulseLabel {
    #[serde(rename = "I_p")]
    Ip,
    #[serde(rename = "I_m")]
    Im,
    #[serde(rename = "X_p")]
    Xp,
    #[serde(rename = "X_m")]
    Xm,
    #[serde(rename = "Y_p")]
    Yp,
    #[serde(rename = "Y_m")]
    Ym,
    #[serde(rename = "Z_p")]
    Zp,
    #[serde(rename = "Z_m")]
    Zm,
}

/// Pauli as `(x, z)` bits: the operator is X^x Z^z up to phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Pauli {
    pub x: bool,
    pub z: bool,
}

impl Pauli {
    pub const I: Pauli = Pauli { x: false, z: false };
    pub const X: Pauli = Pauli { x: true, z: false };
    pub const Y: Pauli = Pauli { x: true, z: true };
    pub const Z: Pauli = Pauli { x: false, z: true };

    /// Product up to phase.
    pub fn compose(self, other: Pauli) -> Pauli {
        Pauli { x: self.x ^ other.x, z: self.z ^ other.z }
    }

    pub fn is_identity(self) -> bool {
        !self.x && !self.z
    }
}

impl PulseLabel {
    pub const ALL: [PulseLabel; 8] = [
        PulseLabel::Ip,
        PulseLabel::Im,
        PulseLabel::Xp,
        PulseLabel::Xm,
        PulseLabel::Yp,
        PulseLabel::Ym,
        PulseLabel::Zp,
        PulseLabel::Zm,
    ];

    pub fn pauli(self) -> Pauli {
        match self {
            PulseLabel::Ip | PulseLabel::Im => Pauli::I,
            PulseLabel::Xp | PulseLabel::Xm => Pauli::X,
            PulseLabel::Yp | PulseLabel::Ym => Pauli::Y,
            PulseLabel::Zp | PulseLabel::Zm => Pauli::Z,
        }
    }

    /// Plus-direction label carrying the given Pauli.
    pub fn from_pauli(p: Pauli) -> PulseLabel {
        match (p.x, p.z) {
            (false, false) => PulseLabel::Ip,
            (true, false) => PulseLabel::Xp,
            (true, true) => PulseLabel::Yp,
            (false, true) => PulseLabel::Zp,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PulseLabel::Ip => "I_p",
            PulseLabel::Im => "I_m",
            PulseLabel::Xp => "X_p",
            PulseLabel::Xm => "X_m",
            PulseLabel::Yp => "Y_p",
            PulseLabel::Ym => "Y_m",
            PulseLabel::Zp => "Z_p",
            PulseLabel::Zm => "Z_m",
        }
    }
}

impl fmt::Display for PulseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PulseLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PulseLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown pulse label {s:?}"))
    }
}

/// An instantaneous pulse on `qubit` at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PulseEvent {
    pub time: Ns,
    pub qubit: usize,
    pub pulse: PulseLabel,
}

pub(crate) fn random_pauli<R: Rng>(rng: &mut R) -> Pauli {
    [Pauli::X, Pauli::Y, Pauli::Z][rng.gen_range(0..3)]
}

pub(crate) fn apply_pauli(state: &mut StateVector, q: usize, p: Pauli) {
    if p.z {
        state.apply_z(q);
    }
    if p.x {
        state.apply_x(q);
    }
}

/// Ideal Pauli for `pulse`, then with probability `pulse_error` a uniformly random
/// non-identity Pauli. Identity slots are free idles and never err.
pub fn apply_pulse<R: Rng>(state: &mut StateVector, qubit: usize, pulse: PulseLabel, pulse_error: f64, rng: &mut R) {
    let p = pulse.pauli();
    apply_pauli(state, qubit, p);
    if pulse_error > 0.0 && !p.is_identity() && rng.gen::<f64>() < pulse_error {
        apply_pauli(state, qubit, random_pauli(rng));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::state::gates;

    fn plus_i() -> StateVector {
        let mut s = StateVector::zero(1);
        s.apply_1q(0, &gates::h());
        s.apply_1q(0, &gates::rz(0.7));
        s
    }

    #[test]
    fn xp_then_xm_restores() {
        let mut r = crate::rng::stream(0, "t", &[]);
        let before = plus_i();
        let mut s = before.clone();
        apply_pulse(&mut s, 0, PulseLabel::Xp, 0.0, &mut r);
        apply_pulse(&mut s, 0, PulseLabel::Xm, 0.0, &mut r);
        assert!((s.overlap(&before) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn z_and_identity_keep_populations() {
        let mut r = crate::rng::stream(0, "t", &[]);
        let mut s = StateVector::zero(1);
        apply_pulse(&mut s, 0, PulseLabel::Zp, 0.0, &mut r);
        assert!((s.prob_one(0)).abs() < 1e-15);
        let before = plus_i();
        let mut s = before.clone();
        apply_pulse(&mut s, 0, PulseLabel::Im, 0.0, &mut r);
        assert_eq!(s, before);
    }

    #[test]
    fn labels_round_trip_through_text() {
        for l in PulseLabel::ALL {
            assert_eq!(l.as_str().parse::<PulseLabel>().unwrap(), l);
            assert_eq!(serde_json::to_string(&l).unwrap(), format!("\"{l}\""));
        }
    }
}
