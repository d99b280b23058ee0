use num_complex::Complex64 as C;

pub type Mat2 = [[C; 2]; 2];

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Dense state of `n` qubits; qubit `q` is bit `q` of the amplitude index.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub n: usize,
    pub amplitudes: Vec<C>,
}

impl StateVector {
    /// |0...0⟩
    pub fn zero(n: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << n];
        amplitudes[0] = ONE;
        Self { n, amplitudes }
    }

    pub fn from_amplitudes(amplitudes: Vec<C>) -> Self {
        assert!(amplitudes.len().is_power_of_two(), "amplitude count must be a power of two");
        Self { n: amplitudes.len().trailing_zeros() as usize, amplitudes }
    }

    pub fn reset(&mut self) {
        self.amplitudes.fill(ZERO);
        self.amplitudes[0] = ONE;
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(C::norm_sqr).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(C::norm_sqr).collect()
    }

    /// |⟨self|other⟩|
    pub fn overlap(&self, other: &StateVector) -> f64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum::<C>().norm()
    }

    pub fn apply_1q(&mut self, q: usize, m: &Mat2) {
        let stride = 1 << q;
        for base in (0..self.amplitudes.len()).step_by(stride << 1) {
            for i in base..base + stride {
                let (a, b) = (self.amplitudes[i], self.amplitudes[i + stride]);
                self.amplitudes[i] = m[0][0] * a + m[0][1] * b;
                self.amplitudes[i + stride] = m[1][0] * a + m[1][1] * b;
            }
        }
    }

    pub fn apply_x(&mut self, q: usize) {
        let stride = 1 << q;
        for base in (0..self.amplitudes.len()).step_by(stride << 1) {
            for i in base..base + stride {
                self.amplitudes.swap(i, i + stride);
            }
        }
    }

    pub fn apply_z(&mut self, q: usize) {
        let mask = 1 << q;
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if i & mask != 0 {
                *a = -*a;
            }
        }
    }

    /// `diag(1, phase)` on qubit `q`.
    pub fn apply_phase(&mut self, q: usize, phase: C) {
        let mask = 1 << q;
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if i & mask != 0 {
                *a *= phase;
            }
        }
    }

    /// exp(−iθ/2 Z) up to global phase.
    pub fn apply_rz(&mut self, q: usize, theta: f64) {
        self.apply_phase(q, C::cis(theta));
    }

    /// exp(−iθ/2 Z⊗Z) up to global phase.
    pub fn apply_rzz(&mut self, a: usize, b: usize, theta: f64) {
        let f = C::cis(theta);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            if ((i >> a) ^ (i >> b)) & 1 == 1 {
                *amp *= f;
            }
        }
    }

    pub fn apply_cx(&mut self, control: usize, target: usize) {
        let (cm, tm) = (1 << control, 1 << target);
        for i in 0..self.amplitudes.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amplitudes.swap(i, i | tm);
            }
        }
    }

    /// Two-qubit operator that preserves excitation number on `(a, b)`:
    /// `e00` on |00⟩, `e11` on |11⟩ and `block` on (|a=1,b=0⟩, |a=0,b=1⟩).
    pub fn apply_exchange(&mut self, a: usize, b: usize, e00: C, e11: C, block: &Mat2) {
        let (am, bm) = (1 << a, 1 << b);
        for i in 0..self.amplitudes.len() {
            match (i & am != 0, i & bm != 0) {
                (false, false) => self.amplitudes[i] *= e00,
                (true, true) => self.amplitudes[i] *= e11,
                (true, false) => {
                    let j = (i & !am) | bm;
                    let (x, y) = (self.amplitudes[i], self.amplitudes[j]);
                    self.amplitudes[i] = block[0][0] * x + block[0][1] * y;
                    self.amplitudes[j] = block[1][0] * x + block[1][1] * y;
                }
                (false, true) => {}
            }
        }
    }

    /// Probability that qubit `q` reads 1.
    pub fn prob_one(&self, q: usize) -> f64 {
        let mask = 1 << q;
        self.amplitudes.iter().enumerate().filter(|(i, _)| i & mask != 0).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Project qubit `q` onto `bit` and renormalize by `sqrt(prob)`.
    pub fn project(&mut self, q: usize, bit: u8, prob: f64) {
        let mask = 1 << q;
        let want = if bit == 1 { mask } else { 0 };
        let scale = 1.0 / prob.sqrt();
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if i & mask == want {
                *a *= scale;
            } else {
                *a = ZERO;
            }
        }
    }
}

pub mod gates {
    use super::{Mat2, C, ONE, ZERO};
    use std::f64::consts::FRAC_1_SQRT_2;

    pub fn h() -> Mat2 {
        let s = C::new(FRAC_1_SQRT_2, 0.0);
        [[s, s], [s, -s]]
    }

    pub fn sx() -> Mat2 {
        let a = C::new(0.5, 0.5);
        let b = C::new(0.5, -0.5);
        [[a, b], [b, a]]
    }

    pub fn x() -> Mat2 {
        [[ZERO, ONE], [ONE, ZERO]]
    }

    pub fn y() -> Mat2 {
        [[ZERO, C::new(0.0, -1.0)], [C::new(0.0, 1.0), ZERO]]
    }

    pub fn z() -> Mat2 {
        [[ONE, ZERO], [ZERO, -ONE]]
    }

    pub fn rz(theta: f64) -> Mat2 {
        [[C::cis(-theta / 2.0), ZERO], [ZERO, C::cis(theta / 2.0)]]
    }

    pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
        let mut out = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_pair_probabilities() {
        let mut s = StateVector::zero(2);
        s.apply_1q(0, &gates::h());
        s.apply_cx(0, 1);
        let p = s.probabilities();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[3] - 0.5).abs() < 1e-12);
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_renormalizes() {
        let mut s = StateVector::zero(1);
        s.apply_1q(0, &gates::h());
        let p1 = s.prob_one(0);
        s.project(0, 1, p1);
        assert!((s.prob_one(0) - 1.0).abs() < 1e-12);
    }
}
