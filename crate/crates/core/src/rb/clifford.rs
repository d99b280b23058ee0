use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64 as C;

use crate::circuit::Gate;
use crate::sim::{gates, Mat2};

/// Gate word applied left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gen {
    X,
    Y,
    Z,
    H,
    SX,
    S,
}

const GENERATORS: [Gen; 6] = [Gen::X, Gen::Y, Gen::Z, Gen::H, Gen::SX, Gen::S];

impl Gen {
    fn matrix(self) -> Mat2 {
        match self {
            Gen::X => gates::x(),
            Gen::Y => gates::y(),
            Gen::Z => gates::z(),
            Gen::H => gates::h(),
            Gen::SX => gates::sx(),
            Gen::S => gates::rz(PI / 2.0),
        }
    }

    fn gate(self, qubit: usize) -> Gate {
        match self {
            Gen::X => Gate::X { qubit },
            Gen::Y => Gate::Y { qubit },
            Gen::Z => Gate::Z { qubit },
            Gen::H => Gate::H { qubit },
            Gen::SX => Gate::SX { qubit },
            Gen::S => Gate::RZ { qubit, theta: PI / 2.0 },
        }
    }
}

/// Matrix with its global phase removed, rounded for hashing.
fn key(m: &Mat2) -> [i64; 8] {
    let flat = [m[0][0], m[0][1], m[1][0], m[1][1]];
    let pivot = flat.iter().find(|a| a.norm() > 1e-6).expect("nonzero matrix");
    let phase = pivot.conj() / pivot.norm();
    let mut k = [0i64; 8];
    for (i, a) in flat.iter().enumerate() {
        let b = a * phase;
        k[2 * i] = (b.re * 1e6).round() as i64;
        k[2 * i + 1] = (b.im * 1e6).round() as i64;
    }
    k
}

/// The 24 single-qubit Cliffords, each with a shortest word over
/// {X, Y, Z, H, SX, S}; index 0 is the identity.
pub struct CliffordGroup {
    words: Vec<Vec<Gen>>,
    matrices: Vec<Mat2>,
    index: HashMap<[i64; 8], usize>,
}

impl CliffordGroup {
    pub fn get() -> &'static CliffordGroup {
        static GROUP: OnceLock<CliffordGroup> = OnceLock::new();
        GROUP.get_or_init(Self::build)
    }

    fn build() -> Self {
        let id: Mat2 = [[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]];
        let mut g = CliffordGroup { words: vec![Vec::new()], matrices: vec![id], index: HashMap::new() };
        g.index.insert(key(&id), 0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for gen in GENERATORS {
                let m = gates::mul(&gen.matrix(), &g.matrices[i]);
                let k = key(&m);
                if !g.index.contains_key(&k) {
                    let mut w = g.words[i].clone();
                    w.push(gen);
                    g.index.insert(k, g.words.len());
                    g.words.push(w);
                    g.matrices.push(m);
                    queue.push_back(g.words.len() - 1);
                }
            }
        }
        g
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn matrix(&self, i: usize) -> &Mat2 {
        &self.matrices[i]
    }

    /// Element equal to `m` up to phase.
    pub fn lookup(&self, m: &Mat2) -> Option<usize> {
        self.index.get(&key(m)).copied()
    }

    /// `a` then `b`.
    pub fn then(&self, a: usize, b: usize) -> usize {
        self.lookup(&gates::mul(&self.matrices[b], &self.matrices[a])).expect("group is closed")
    }

    pub fn inverse(&self, a: usize) -> usize {
        let m = &self.matrices[a];
        let dag = [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]];
        self.lookup(&dag).expect("group is closed")
    }

    pub fn gates(&self, i: usize, qubit: usize) -> Vec<Gate> {
        self.words[i].iter().map(|g| g.gate(qubit)).collect()
    }

    /// Index of a Pauli (X, Y or Z) within the group.
    pub fn pauli(&self, p: char) -> usize {
        let m = match p {
            'X' => gates::x(),
            'Y' => gates::y(),
            'Z' => gates::z(),
            _ => panic!("not a Pauli: {p}"),
        };
        self.lookup(&m).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_has_24_elements_and_closes() {
        let g = CliffordGroup::get();
        assert_eq!(g.len(), 24);
        for a in 0..24 {
            assert_eq!(g.then(a, g.inverse(a)), 0);
            for b in 0..24 {
                let _ = g.then(a, b);
            }
        }
        assert!(g.words.iter().all(|w| w.len() <= 3));
    }

    #[test]
    fn words_reproduce_matrices() {
        let g = CliffordGroup::get();
        for i in 0..24 {
            let mut m: Mat2 = [[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]];
            for gen in &g.words[i] {
                m = gates::mul(&gen.matrix(), &m);
            }
            assert_eq!(g.lookup(&m), Some(i));
        }
    }
}
