//! Dense state-vector kernel.
//!
//! Qubit `q` is bit `q` of the basis index (qubit 0 is the least significant
//! bit). Gates are applied in place with stride arithmetic; no operator is ever
//! expanded to a `2^m x 2^m` matrix.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Gate, GateKind};
use crate::error::{domain, Error, Result};

/// Largest register the kernel accepts.
pub const MAX_QUBITS: usize = 26;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    /// Letter for the base-4 digit `0 = I, 1 = X, 2 = Y, 3 = Z`.
    pub fn from_digit(d: u32) -> Pauli {
        match d & 3 {
            0 => Pauli::I,
            1 => Pauli::X,
            2 => Pauli::Y,
            _ => Pauli::Z,
        }
    }

    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }
}

/// A tensor product of single-qubit Paulis, stored as bit masks.
///
/// Qubit `q` carries `X` when only bit `q` of `x` is set, `Z` when only bit `q`
/// of `z` is set and `Y = [[0, -i], [i, 0]]` when both are set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliWord {
    x: u64,
    z: u64,
}

impl PauliWord {
    pub const IDENTITY: PauliWord = PauliWord { x: 0, z: 0 };

    pub fn from_masks(x: u64, z: u64) -> Self {
        PauliWord { x, z }
    }

    pub fn single(qubit: usize, p: Pauli) -> Self {
        let mut w = PauliWord::IDENTITY;
        w.set(qubit, p);
        w
    }

    /// Builds a word from `(qubit, letter)` pairs; qubits must be distinct.
    pub fn from_letters(letters: &[(usize, Pauli)]) -> Result<Self> {
        let mut w = PauliWord::IDENTITY;
        let mut seen = 0u64;
        for &(q, p) in letters {
            if q >= 64 {
                return domain(format!("qubit {q} out of range for a Pauli word"));
            }
            if seen & (1 << q) != 0 {
                return domain(format!("qubit {q} repeated in Pauli word"));
            }
            seen |= 1 << q;
            w.set(q, p);
        }
        Ok(w)
    }

    /// X-type word `X_v` with `v` given as a bit mask.
    pub fn x_mask(v: u64) -> Self {
        PauliWord { x: v, z: 0 }
    }

    pub fn z_mask(v: u64) -> Self {
        PauliWord { x: 0, z: v }
    }

    pub fn set(&mut self, qubit: usize, p: Pauli) {
        let bit = 1u64 << qubit;
        let (x, z) = p.bits();
        self.x = if x { self.x | bit } else { self.x & !bit };
        self.z = if z { self.z | bit } else { self.z & !bit };
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        let bit = 1u64 << qubit;
        match (self.x & bit != 0, self.z & bit != 0) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn x_bits(&self) -> u64 {
        self.x
    }

    pub fn z_bits(&self) -> u64 {
        self.z
    }

    /// Mask of qubits carrying a non-identity letter.
    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.support() == 0
    }

    pub fn letters(&self) -> Vec<(usize, Pauli)> {
        let s = self.support();
        (0..64)
            .filter(|q| s & (1 << q) != 0)
            .map(|q| (q, self.get(q)))
            .collect()
    }

    pub(crate) fn to_op(self) -> PauliOp {
        PauliOp {
            x: self.x,
            z: self.z,
            phase: ((self.x & self.z).count_ones() & 3) as u8,
        }
    }
}

impl fmt::Display for PauliWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return write!(f, "I");
        }
        for (i, (q, p)) in self.letters().into_iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{p:?}{q}")?;
        }
        Ok(())
    }
}

/// `i^phase · X^x · Z^z`: a Pauli operator with its phase tracked, so several
/// commuting single-qubit Paulis can be folded into one pass over the state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct PauliOp {
    pub x: u64,
    pub z: u64,
    pub phase: u8,
}

impl PauliOp {
    /// Operator product `next · self` (self acts first).
    pub fn then(self, next: PauliOp) -> PauliOp {
        // Z^{z2} X^{x1} = (-1)^{|z2 & x1|} X^{x1} Z^{z2}
        let swap = ((next.z & self.x).count_ones() & 1) as u8 * 2;
        PauliOp {
            x: self.x ^ next.x,
            z: self.z ^ next.z,
            phase: (self.phase + next.phase + swap) & 3,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0 && self.phase == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|index⟩` on `num_qubits` qubits.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_size(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index >= dim {
            return domain(format!("basis index {index} out of range for {num_qubits} qubits"));
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    /// `|0…0⟩`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    /// Wraps raw amplitudes; the length must be a power of two. No normalization
    /// is performed.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return domain(format!("amplitude count {len} is not a power of two"));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits == 0 {
            return domain("a state needs at least one qubit");
        }
        check_size(num_qubits)?;
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amplitudes[index]
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.amplitudes[index].norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Largest amplitude-wise distance to `other`.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `self ⊗ other` with `self` on the low qubits and `other` above it.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let num_qubits = self.num_qubits + other.num_qubits;
        check_size(num_qubits)?;
        let mut amplitudes = Vec::with_capacity(1 << num_qubits);
        for hi in &other.amplitudes {
            amplitudes.extend(self.amplitudes.iter().map(|lo| lo * hi));
        }
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    /// Applies one gate after validating its qubit indices.
    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.num_qubits)?;
        self.apply_gate_unchecked(gate);
        Ok(())
    }

    pub(crate) fn apply_gate_unchecked(&mut self, gate: &Gate) {
        let q = gate.qubits();
        match gate.kind() {
            GateKind::H => self.hadamard(q[0]),
            GateKind::X => self.apply_op(PauliWord::single(q[0], Pauli::X).to_op()),
            GateKind::Y => self.apply_op(PauliWord::single(q[0], Pauli::Y).to_op()),
            GateKind::Z => self.apply_op(PauliWord::single(q[0], Pauli::Z).to_op()),
            GateKind::Cnot => self.controlled_flip(1 << q[0], q[1]),
            GateKind::Toffoli => self.controlled_flip((1 << q[0]) | (1 << q[1]), q[2]),
        }
    }

    /// Applies a Pauli word; the support must lie inside the register.
    pub fn apply_pauli(&mut self, word: &PauliWord) -> Result<()> {
        if word.support() >> self.num_qubits != 0 {
            return domain(format!(
                "Pauli word {word} has support outside {} qubits",
                self.num_qubits
            ));
        }
        self.apply_op(word.to_op());
        Ok(())
    }

    pub(crate) fn apply_op(&mut self, op: PauliOp) {
        let PauliOp { x, z, phase } = op;
        let amps = &mut self.amplitudes;
        if x == 0 {
            if z != 0 {
                for (i, a) in amps.iter_mut().enumerate() {
                    if (i as u64 & z).count_ones() & 1 == 1 {
                        *a = -*a;
                    }
                }
            }
        } else {
            let top = 1u64 << (63 - x.leading_zeros());
            let xs = x as usize;
            for i in 0..amps.len() {
                if i as u64 & top != 0 {
                    continue;
                }
                let j = i ^ xs;
                let (mut a, mut b) = (amps[i], amps[j]);
                if (i as u64 & z).count_ones() & 1 == 1 {
                    a = -a;
                }
                if (j as u64 & z).count_ones() & 1 == 1 {
                    b = -b;
                }
                amps[j] = a;
                amps[i] = b;
            }
        }
        match phase & 3 {
            0 => {}
            2 => amps.iter_mut().for_each(|a| *a = -*a),
            p => {
                let s = if p == 1 { 1.0 } else { -1.0 };
                for a in amps.iter_mut() {
                    *a = Complex64::new(-s * a.im, s * a.re);
                }
            }
        }
    }

    fn hadamard(&mut self, q: usize) {
        let step = 1usize << q;
        let amps = &mut self.amplitudes;
        for base in (0..amps.len()).step_by(step << 1) {
            for i in base..base + step {
                let a = amps[i];
                let b = amps[i + step];
                amps[i] = (a + b) * FRAC_1_SQRT_2;
                amps[i + step] = (a - b) * FRAC_1_SQRT_2;
            }
        }
    }

    fn controlled_flip(&mut self, controls: usize, target: usize) {
        let t = 1usize << target;
        let amps = &mut self.amplitudes;
        for i in 0..amps.len() {
            if i & controls == controls && i & t == 0 {
                amps.swap(i, i | t);
            }
        }
    }

    /// Probability that the qubits in `qubits` read `outcome` (same order).
    pub fn marginal_probability(&self, qubits: &[usize], outcome: &[bool]) -> Result<f64> {
        if qubits.len() != outcome.len() {
            return domain(format!(
                "{} qubits but {} outcome bits",
                qubits.len(),
                outcome.len()
            ));
        }
        let (mask, _) = self.subset_mask(qubits)?;
        let want = qubits
            .iter()
            .zip(outcome)
            .filter(|(_, &b)| b)
            .fold(0usize, |acc, (&q, _)| acc | (1 << q));
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == want)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Probability that the lowest `num_low` qubits are all zero.
    pub fn low_register_zero_probability(&self, num_low: usize) -> f64 {
        self.amplitudes
            .iter()
            .step_by(1 << num_low.min(self.num_qubits))
            .map(|a| a.norm_sqr())
            .sum()
    }

    /// Distribution of the lowest `num_low` qubits with everything above traced
    /// out; entry `k` is the probability of reading `k` on that register.
    pub fn low_register_distribution(&self, num_low: usize) -> Vec<f64> {
        let num_low = num_low.min(self.num_qubits);
        let mut out = vec![0.0; 1 << num_low];
        let mask = (1usize << num_low) - 1;
        for (i, a) in self.amplitudes.iter().enumerate() {
            out[i & mask] += a.norm_sqr();
        }
        out
    }

    /// Projective computational-basis measurement of `qubits`. Collapses the
    /// state in place and returns the outcome bits in the order given.
    pub fn measure<R: Rng + ?Sized>(&mut self, qubits: &[usize], rng: &mut R) -> Result<Vec<bool>> {
        let (mask, _) = self.subset_mask(qubits)?;
        let mut weights = std::collections::BTreeMap::new();
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                *weights.entry(i & mask).or_insert(0.0) += p;
            }
        }
        let total: f64 = weights.values().sum();
        let r = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (&outcome, &w) in &weights {
            acc += w;
            chosen = Some((outcome, w));
            if r < acc {
                break;
            }
        }
        let (outcome, weight) =
            chosen.ok_or_else(|| Error::Internal("measurement on a zero state".into()))?;
        if weight <= 0.0 {
            return Err(Error::Internal("zero-probability measurement branch".into()));
        }
        let scale = 1.0 / weight.sqrt();
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if i & mask == outcome {
                *a *= scale;
            } else {
                *a = ZERO;
            }
        }
        Ok(qubits.iter().map(|&q| outcome & (1 << q) != 0).collect())
    }

    /// The state of the qubits outside `fixed_mask`, given that those qubits
    /// are in the definite basis configuration `fixed_value`. The remaining
    /// qubits keep their relative order. Used after a full measurement of a
    /// sub-register.
    pub fn extract_unfixed(&self, fixed_mask: usize, fixed_value: usize) -> Result<StateVector> {
        let keep: Vec<usize> = (0..self.num_qubits)
            .filter(|q| fixed_mask & (1 << q) == 0)
            .collect();
        if keep.is_empty() {
            return domain("nothing left after fixing every qubit");
        }
        let mut out = vec![ZERO; 1 << keep.len()];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut i = fixed_value & fixed_mask;
            for (bit, &q) in keep.iter().enumerate() {
                if k & (1 << bit) != 0 {
                    i |= 1 << q;
                }
            }
            *slot = self.amplitudes[i];
        }
        let mut s = StateVector::from_amplitudes(out)?;
        let n = s.norm();
        if n == 0.0 {
            return Err(Error::Internal("extracted a zero state".into()));
        }
        s.amplitudes.iter_mut().for_each(|a| *a /= n);
        Ok(s)
    }

    fn subset_mask(&self, qubits: &[usize]) -> Result<(usize, usize)> {
        let mut mask = 0usize;
        for &q in qubits {
            if q >= self.num_qubits {
                return domain(format!("qubit {q} out of range for {} qubits", self.num_qubits));
            }
            if mask & (1 << q) != 0 {
                return domain(format!("qubit {q} repeated"));
            }
            mask |= 1 << q;
        }
        Ok((mask, qubits.len()))
    }
}

fn check_size(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 || num_qubits > MAX_QUBITS {
        return domain(format!("register of {num_qubits} qubits is outside 1..={MAX_QUBITS}"));
    }
    Ok(())
}
