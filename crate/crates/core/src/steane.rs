//! The `[[7,1,3]]` Steane code: code tables, `|0_E⟩` synthesis, verified
//! preparation with restart, transversal gates, classical decoding and the
//! encoded two-qubit Grover experiment.
//!
//! Bit `j` of a 7-bit word is qubit `j` of its block. Block `b` of an encoded
//! register occupies qubits `7b..7b+7`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::analysis::params_for_ratio;
use crate::circuit::{build_grover_gate, build_uniform_superposition, schedule_layers, Circuit, Gate, GateKind};
use crate::error::{domain, Error, Result};
use crate::mc::{estimate_success_curve, McRun};
use crate::noise::{run_layers, sample_gate_error, sample_memory_word, MemoryMode, NoiseParams, RandomStream};
use crate::par;
use crate::qstate::{PauliWord, StateVector};
use num_complex::Complex64;
use rand::Rng;

pub const BLOCK: usize = 7;
pub const ALL_ONES: u8 = 0x7f;
pub const DEFAULT_MAX_RESTARTS: usize = 100;

/// Stream offset of the unencoded arm, so it never shares a stream with the
/// encoded arm of the same run.
pub const BARE_STREAM_OFFSET: u64 = 1 << 62;

/// Classical Hamming pair `C = [7,4,3] ⊃ C⊥ = [7,3,4]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeTables {
    /// Parity-check rows of `C`; they also generate `C⊥`. Column `j` is the
    /// binary expansion of `j + 1`.
    pub parity_check: [u8; 3],
    pub dual_codewords: Vec<u8>,
    pub codewords: Vec<u8>,
    /// Weight ≤ 1 correction for each syndrome.
    pub corrections: [u8; 8],
    logical: Vec<u8>,
}

impl CodeTables {
    pub fn new() -> Result<CodeTables> {
        let mut parity_check = [0u8; 3];
        for (r, row) in parity_check.iter_mut().enumerate() {
            for j in 0..BLOCK {
                if ((j + 1) >> r) & 1 == 1 {
                    *row |= 1 << j;
                }
            }
        }
        let dual_codewords: Vec<u8> = (0..8u8)
            .map(|k| {
                (0..3)
                    .filter(|r| (k >> r) & 1 == 1)
                    .fold(0, |acc, r| acc ^ parity_check[r])
            })
            .collect();
        let syndrome = |w: u8| -> u8 {
            (0..3)
                .map(|r| (((w & parity_check[r]).count_ones() & 1) as u8) << r)
                .fold(0, |a, b| a | b)
        };
        let codewords: Vec<u8> = (0..=ALL_ONES).filter(|&w| syndrome(w) == 0).collect();
        let mut corrections = [0u8; 8];
        for j in 0..BLOCK {
            corrections[syndrome(1 << j) as usize] = 1 << j;
        }
        let mut t = CodeTables {
            parity_check,
            dual_codewords,
            codewords,
            corrections,
            logical: Vec::new(),
        };
        t.logical = (0..=ALL_ONES)
            .map(|w| classical_decode(w, &t).map(|d| d.logical))
            .collect::<Result<Vec<u8>>>()?;
        t.verify()?;
        Ok(t)
    }

    /// Generator rows of `C⊥`.
    pub fn generator(&self) -> [u8; 3] {
        self.parity_check
    }

    pub fn syndrome(&self, w: u8) -> u8 {
        (0..3)
            .map(|r| (((w & self.parity_check[r]).count_ones() & 1) as u8) << r)
            .fold(0, |a, b| a | b)
    }

    pub fn in_code(&self, w: u8) -> bool {
        self.codewords.contains(&w)
    }

    pub fn in_dual(&self, w: u8) -> bool {
        self.dual_codewords.contains(&w)
    }

    /// Logical bit a readout word decodes to.
    pub fn logical_of(&self, w: u8) -> u8 {
        self.logical[(w & ALL_ONES) as usize]
    }

    /// Checks sizes, nesting, distances and the correction table.
    pub fn verify(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Internal(format!("code tables: {m}")));
        if self.dual_codewords.len() != 8 || self.codewords.len() != 16 {
            return fail("wrong code sizes");
        }
        if !self.dual_codewords.iter().all(|&w| self.in_code(w)) {
            return fail("C⊥ is not contained in C");
        }
        if min_distance(&self.dual_codewords) != 4 || min_distance(&self.codewords) != 3 {
            return fail("wrong minimum distances");
        }
        if !self.in_code(ALL_ONES) || self.in_dual(ALL_ONES) {
            return fail("all-ones word must lie in C but not in C⊥");
        }
        for s in 1..8u8 {
            let c = self.corrections[s as usize];
            if c.count_ones() != 1 || self.syndrome(c) != s {
                return fail("bad correction table");
            }
        }
        Ok(())
    }
}

/// Shared tables built once.
pub fn tables() -> &'static CodeTables {
    static T: OnceLock<CodeTables> = OnceLock::new();
    T.get_or_init(|| CodeTables::new().expect("Hamming tables are consistent"))
}

/// Smallest weight of a nonzero word of a linear code.
pub fn min_distance(code: &[u8]) -> u32 {
    code.iter()
        .filter(|&&w| w != 0)
        .map(|w| w.count_ones())
        .min()
        .unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    pub logical: u8,
    pub corrected: u8,
    /// A correction was applied.
    pub detected: bool,
}

/// Syndrome decoding of a 7-bit readout.
pub fn classical_decode(bits: u8, t: &CodeTables) -> Result<Decoded> {
    let bits = bits & ALL_ONES;
    let s = t.syndrome(bits);
    let corrected = bits ^ t.corrections[s as usize];
    if t.syndrome(corrected) != 0 {
        return Err(Error::DecodeFailure(corrected));
    }
    Ok(Decoded {
        logical: if t.in_dual(corrected) { 0 } else { 1 },
        corrected,
        detected: s != 0,
    })
}

fn coset_state(t: &CodeTables, shift: u8) -> StateVector {
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << BLOCK];
    let a = 1.0 / 8f64.sqrt();
    for &c in &t.dual_codewords {
        amps[(c ^ shift) as usize] = Complex64::new(a, 0.0);
    }
    StateVector::from_amplitudes(amps).expect("128 amplitudes")
}

/// `|0_E⟩`: equal superposition of the eight `C⊥` words.
pub fn logical_zero_ideal() -> StateVector {
    coset_state(tables(), 0)
}

/// `|1_E⟩`: the same superposition shifted by the all-ones word.
pub fn logical_one_ideal() -> StateVector {
    coset_state(tables(), ALL_ONES)
}

fn weight_words(w: u32) -> impl Iterator<Item = u8> {
    (1..=ALL_ONES).filter(move |v| v.count_ones() == w)
}

/// Pairings between weight-2 and weight-1 bit flips.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightEquivalence {
    /// `(v, u)` with `X_v|0_E⟩ = X_u|1_E⟩`, `|v| = 2`, `|u| = 1`.
    pub forward: Vec<(u8, u8)>,
    /// `(u, v)` with `X_u|0_E⟩ = X_v|1_E⟩`, `|u| = 1`, `|v| = 2`.
    pub inverse: Vec<(u8, u8)>,
}

fn flipped(state: &StateVector, v: u8) -> StateVector {
    let mut s = state.clone();
    s.apply_pauli(&PauliWord::x_mask(v as u64)).expect("7-qubit word");
    s
}

fn phased(state: &StateVector, v: u8) -> StateVector {
    let mut s = state.clone();
    s.apply_pauli(&PauliWord::z_mask(v as u64)).expect("7-qubit word");
    s
}

fn pair_up(
    from: impl Iterator<Item = u8>,
    to_weight: u32,
    lhs: impl Fn(u8) -> StateVector,
    rhs: impl Fn(u8) -> StateVector,
) -> Result<Vec<(u8, u8)>> {
    from.map(|v| {
        let l = lhs(v);
        weight_words(to_weight)
            .find(|&u| l.max_abs_diff(&rhs(u)) < 1e-12)
            .map(|u| (v, u))
            .ok_or_else(|| Error::Internal(format!("word {v:07b} has no partner of weight {to_weight}")))
    })
    .collect()
}

/// Compares the flipped code states amplitude by amplitude.
pub fn weight_equivalence_check(t: &CodeTables) -> Result<WeightEquivalence> {
    let zero = coset_state(t, 0);
    let one = coset_state(t, ALL_ONES);
    Ok(WeightEquivalence {
        forward: pair_up(weight_words(2), 1, |v| flipped(&zero, v), |u| flipped(&one, u))?,
        inverse: pair_up(weight_words(1), 2, |u| flipped(&zero, u), |v| flipped(&one, v))?,
    })
}

/// `(v, u)` with `Z_v|0_E⟩ = Z_u|0_E⟩` for every weight-2 `v`.
pub fn phase_equivalence_check(t: &CodeTables) -> Result<Vec<(u8, u8)>> {
    let zero = coset_state(t, 0);
    pair_up(weight_words(2), 1, |v| phased(&zero, v), |u| phased(&zero, u))
}

/// Non-fault-tolerant `|0_E⟩` synthesis: a Hadamard on one pivot qubit per
/// generator row, then a CNOT fan-out from each pivot over its row.
pub fn build_zero_synthesis_network(t: &CodeTables) -> Result<Circuit> {
    let rows = t.generator();
    let mut pivots = [0usize; 3];
    for (r, &row) in rows.iter().enumerate() {
        pivots[r] = (0..BLOCK)
            .find(|&j| (row >> j) & 1 == 1 && rows.iter().filter(|&&o| (o >> j) & 1 == 1).count() == 1)
            .ok_or_else(|| Error::Internal("generator is not in systematic form".into()))?;
    }
    let targets: Vec<Vec<usize>> = rows
        .iter()
        .zip(&pivots)
        .map(|(&row, &p)| (0..BLOCK).filter(|&j| j != p && (row >> j) & 1 == 1).collect())
        .collect();
    // pick target orders so that each round of fan-out CNOTs is disjoint
    let orders = round_orders(&targets);
    let mut gates: Vec<Gate> = pivots.iter().map(|&p| Gate::h(p)).collect();
    let rounds = targets.iter().map(Vec::len).max().unwrap_or(0);
    for k in 0..rounds {
        for (r, order) in orders.iter().enumerate() {
            if let Some(&tq) = order.get(k) {
                gates.push(Gate::cnot(pivots[r], tq));
            }
        }
    }
    schedule_layers(BLOCK, 0, &gates)
}

fn permutations(v: &[usize]) -> Vec<Vec<usize>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn round_orders(targets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    fn search(targets: &[Vec<usize>], chosen: &mut Vec<Vec<usize>>) -> bool {
        let r = chosen.len();
        if r == targets.len() {
            return true;
        }
        for p in permutations(&targets[r]) {
            let clash = chosen
                .iter()
                .any(|c| c.iter().zip(&p).any(|(a, b)| a == b));
            if !clash {
                chosen.push(p);
                if search(targets, chosen) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    let mut chosen = Vec::new();
    if search(targets, &mut chosen) {
        chosen
    } else {
        targets.to_vec()
    }
}

/// Logical gates available transversally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transversal {
    H,
    X,
    Z,
    Cnot,
    /// Realized as `H·CNOT·H` on the target block.
    Cz,
}

/// Disjoint 7-qubit blocks inside one register.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedRegister {
    offsets: Vec<usize>,
}

impl EncodedRegister {
    pub fn new(offsets: Vec<usize>) -> Result<EncodedRegister> {
        for (i, a) in offsets.iter().enumerate() {
            for b in &offsets[i + 1..] {
                if a.abs_diff(*b) < BLOCK {
                    return domain(format!("blocks at {a} and {b} overlap"));
                }
            }
        }
        Ok(EncodedRegister { offsets })
    }

    /// `k` blocks packed from qubit 0.
    pub fn contiguous(k: usize) -> EncodedRegister {
        EncodedRegister {
            offsets: (0..k).map(|b| b * BLOCK).collect(),
        }
    }

    pub fn logical_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn num_qubits(&self) -> usize {
        self.offsets.iter().map(|o| o + BLOCK).max().unwrap_or(0)
    }

    pub fn qubit(&self, block: usize, i: usize) -> usize {
        self.offsets[block] + i
    }

    /// 7-bit readout of one block from a basis index.
    pub fn block_word(&self, block: usize, index: usize) -> u8 {
        ((index >> self.offsets[block]) & ALL_ONES as usize) as u8
    }
}

/// Qubit-wise gate sequence of a logical gate on the given block(s).
pub fn transversal_gate(kind: Transversal, reg: &EncodedRegister, blocks: &[usize]) -> Result<Vec<Gate>> {
    let arity = match kind {
        Transversal::Cnot | Transversal::Cz => 2,
        _ => 1,
    };
    if blocks.len() != arity {
        return domain(format!("{kind:?} acts on {arity} block(s), got {}", blocks.len()));
    }
    if let Some(&b) = blocks.iter().find(|&&b| b >= reg.logical_count()) {
        return domain(format!("block {b} does not exist"));
    }
    if arity == 2 && blocks[0] == blocks[1] {
        return domain("control and target blocks coincide");
    }
    let q = |b: usize, i: usize| reg.qubit(blocks[b], i);
    let mut out = Vec::new();
    match kind {
        Transversal::H => out.extend((0..BLOCK).map(|i| Gate::h(q(0, i)))),
        Transversal::X => out.extend((0..BLOCK).map(|i| Gate::x(q(0, i)))),
        Transversal::Z => out.extend((0..BLOCK).map(|i| Gate::z(q(0, i)))),
        Transversal::Cnot => out.extend((0..BLOCK).map(|i| Gate::cnot(q(0, i), q(1, i)))),
        Transversal::Cz => {
            out.extend((0..BLOCK).map(|i| Gate::h(q(1, i))));
            out.extend((0..BLOCK).map(|i| Gate::cnot(q(0, i), q(1, i))));
            out.extend((0..BLOCK).map(|i| Gate::h(q(1, i))));
        }
    }
    Ok(out)
}

/// Maps every gate of a Toffoli-free circuit to its transversal version, one
/// block per original qubit, and reschedules.
pub fn encode_circuit(bare: &Circuit) -> Result<Circuit> {
    let reg = EncodedRegister::contiguous(bare.num_qubits());
    let mut gates = Vec::new();
    for g in bare.gates() {
        let q = g.qubits();
        let seq = match g.kind() {
            GateKind::H => transversal_gate(Transversal::H, &reg, q)?,
            GateKind::X => transversal_gate(Transversal::X, &reg, q)?,
            GateKind::Z => transversal_gate(Transversal::Z, &reg, q)?,
            GateKind::Cnot => transversal_gate(Transversal::Cnot, &reg, q)?,
            GateKind::Y => {
                let mut v = transversal_gate(Transversal::X, &reg, q)?;
                v.extend(transversal_gate(Transversal::Z, &reg, q)?);
                v
            }
            GateKind::Toffoli => return domain("no transversal Toffoli"),
        };
        gates.extend(seq);
    }
    schedule_layers(reg.num_qubits(), 0, &gates)
}

/// Superposition layer and one Grover iteration for two logical qubits.
pub fn build_encoded_grover() -> Result<Circuit> {
    let sup = build_uniform_superposition(2)?;
    let grover = build_grover_gate(2)?;
    let gates: Vec<Gate> = sup.gates().chain(grover.gates()).copied().collect();
    encode_circuit(&schedule_layers(2, 0, &gates)?)
}

/// Probability of each verification readout `w` after a transversal CNOT from
/// block `a` to block `b` and a Z-basis measurement of `b`.
pub fn verification_distribution(a: &StateVector, b: &StateVector) -> Result<Vec<f64>> {
    check_block(a)?;
    check_block(b)?;
    let mut p = vec![0.0; 1 << BLOCK];
    for (x, ax) in a.amplitudes().iter().enumerate() {
        let pa = ax.norm_sqr();
        if pa == 0.0 {
            continue;
        }
        for (y, by) in b.amplitudes().iter().enumerate() {
            p[x ^ y] += pa * by.norm_sqr();
        }
    }
    Ok(p)
}

/// State of block `a` after readout `w` of block `b` in the same setting.
pub fn post_verification(a: &StateVector, b: &StateVector, w: u8) -> Result<StateVector> {
    check_block(a)?;
    check_block(b)?;
    let w = (w & ALL_ONES) as usize;
    let amps: Vec<Complex64> = a
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(x, ax)| ax * b.amplitudes()[x ^ w])
        .collect();
    let norm = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return domain(format!("readout {w:07b} has probability zero"));
    }
    StateVector::from_amplitudes(amps.into_iter().map(|c| c / norm).collect())
}

fn check_block(s: &StateVector) -> Result<()> {
    if s.num_qubits() != BLOCK {
        return domain(format!("expected a 7-qubit block, got {} qubits", s.num_qubits()));
    }
    Ok(())
}

/// An accepted `|0_E⟩` block.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub state: StateVector,
    pub attempts: usize,
    pub verification_word: u8,
}

/// Verified `|0_E⟩` preparation.
///
/// Each attempt synthesizes two blocks, couples them with a noisy transversal
/// CNOT (first block controls), then spends one time step measuring the
/// second block, with a `γ` word on each measured qubit just before readout.
/// The first block is kept only if the readout lies in `C⊥`. Nothing happens
/// to an accepted block between attempts.
///
/// All gates involved are Clifford, so the Pauli errors of the coupling and
/// measurement steps are conjugated back through the CNOT and applied to the
/// two 7-qubit factors, after which coupling and readout are exact.
pub fn prepare_zero_ft(params: &NoiseParams, rng: &mut RandomStream, max_restarts: usize) -> Result<Prepared> {
    if max_restarts < 1 {
        return domain("max_restarts must be at least 1");
    }
    let t = tables();
    let synth = synthesis_network();
    let lo = ALL_ONES as u64;
    let hi = lo << BLOCK;
    for attempt in 1..=max_restarts {
        let mut a = StateVector::zero(BLOCK)?;
        let mut b = StateVector::zero(BLOCK)?;
        run_layers(synth, params, rng, &mut a);
        run_layers(synth, params, rng, &mut b);

        let mut err = PauliWord::IDENTITY;
        let mut acc = |w: PauliWord| err = PauliWord::from_masks(err.x_bits() ^ w.x_bits(), err.z_bits() ^ w.z_bits());
        for i in 0..BLOCK {
            acc(sample_gate_error(&Gate::cnot(i, i + BLOCK), params.gamma, rng));
        }
        // the coupling step keeps every qubit busy; readout keeps the second block busy
        let (coupling_idle, readout_idle) = match params.memory {
            MemoryMode::Additive => (lo | hi, lo | hi),
            MemoryMode::IdleOnly => (0, lo),
        };
        acc(sample_memory_word(coupling_idle, params.epsilon, rng));
        acc(sample_memory_word(readout_idle, params.epsilon, rng));
        acc(sample_memory_word(hi, params.gamma, rng));

        let (xa, xb) = (err.x_bits() & lo, (err.x_bits() & hi) >> BLOCK);
        let (za, zb) = (err.z_bits() & lo, (err.z_bits() & hi) >> BLOCK);
        a.apply_pauli(&PauliWord::from_masks(xa, za ^ zb))?;
        b.apply_pauli(&PauliWord::from_masks(xb ^ xa, zb))?;

        let dist = verification_distribution(&a, &b)?;
        let w = sample_index(&dist, rng.gen::<f64>()) as u8;
        if t.in_dual(w) {
            return Ok(Prepared {
                state: post_verification(&a, &b, w)?,
                attempts: attempt,
                verification_word: w,
            });
        }
    }
    Err(Error::PreparationFailed { attempts: max_restarts })
}

fn synthesis_network() -> &'static Circuit {
    static C: OnceLock<Circuit> = OnceLock::new();
    C.get_or_init(|| build_zero_synthesis_network(tables()).expect("synthesis network"))
}

fn sample_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Probability that a Z-basis readout of a block decodes to logical 1.
pub fn logical_flip_probability(block: &StateVector) -> Result<f64> {
    check_block(block)?;
    let t = tables();
    Ok(block
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(w, _)| t.logical_of(*w as u8) == 1)
        .map(|(_, a)| a.norm_sqr())
        .sum())
}

/// Probability that every block of an encoded register decodes to logical 0.
pub fn decoded_zero_probability(state: &StateVector, reg: &EncodedRegister) -> Result<f64> {
    if state.num_qubits() != reg.num_qubits() {
        return domain("register and state sizes differ");
    }
    let t = tables();
    Ok(state
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(i, _)| (0..reg.logical_count()).all(|b| t.logical_of(reg.block_word(b, *i)) == 0))
        .map(|(_, a)| a.norm_sqr())
        .sum())
}

#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    sum: f64,
    sum_sq: f64,
    attempts: f64,
    prepared_blocks: u64,
    failures: u64,
    count: u64,
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.attempts += o.attempts;
        self.prepared_blocks += o.prepared_blocks;
        self.failures += o.failures;
        self.count += o.count;
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    fn std_err(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let m = self.mean();
        (((self.sum_sq / n - m * m) * n / (n - 1.0)).max(0.0) / n).sqrt()
    }
}

fn run_tally<F>(run: &McRun, f: F) -> Result<Tally>
where
    F: Fn(&mut RandomStream, &mut Tally) -> Result<()> + Sync + Send,
{
    let blocks = par::blocks(run.n_trajectories, run.workers, |range| -> Result<Tally> {
        let mut t = Tally::default();
        for i in range {
            let mut rng = RandomStream::new(run.master_seed, run.first_stream + i);
            f(&mut rng, &mut t)?;
            t.count += 1;
        }
        Ok(t)
    });
    let mut total = Tally::default();
    for b in blocks {
        total.merge(&b?);
    }
    Ok(total)
}

/// Post-acceptance logical error rate of the verified preparation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepStats {
    pub epsilon: f64,
    pub gamma: f64,
    pub logical_error_rate: f64,
    pub std_err: f64,
    pub mean_attempts: f64,
    /// Trajectories that ran out of restarts; excluded from the rate.
    pub failures: u64,
    pub n_trajectories: u64,
    pub master_seed: u64,
}

pub fn ft_prep_error_rate(params: &NoiseParams, run: &McRun, max_restarts: usize) -> Result<PrepStats> {
    let t = run_tally(run, |rng, acc| {
        match prepare_zero_ft(params, rng, max_restarts) {
            Ok(p) => {
                let e = logical_flip_probability(&p.state)?;
                acc.sum += e;
                acc.sum_sq += e * e;
                acc.attempts += p.attempts as f64;
                acc.prepared_blocks += 1;
            }
            Err(Error::PreparationFailed { .. }) => {
                acc.failures += 1;
            }
            Err(e) => return Err(e),
        }
        Ok(())
    })?;
    let accepted = Tally {
        count: t.prepared_blocks,
        ..t
    };
    Ok(PrepStats {
        epsilon: params.epsilon,
        gamma: params.gamma,
        logical_error_rate: accepted.mean(),
        std_err: accepted.std_err(),
        mean_attempts: if t.prepared_blocks > 0 {
            t.attempts / t.prepared_blocks as f64
        } else {
            0.0
        },
        failures: t.failures,
        n_trajectories: t.count,
        master_seed: run.master_seed,
    })
}

/// Paired success estimates of the encoded and the bare two-qubit search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedResult {
    pub epsilon: f64,
    pub gamma: f64,
    pub ratio: f64,
    pub encoded_ps: f64,
    pub encoded_stderr: f64,
    pub bare_ps: f64,
    pub bare_stderr: f64,
    /// Mean attempts per accepted block.
    pub mean_attempts: f64,
    /// Trajectories counted as failures because a block ran out of restarts.
    pub prep_failures: u64,
    pub n_traj: u64,
    pub seed: u64,
}

impl EncodedResult {
    pub fn prep_failure_fraction(&self) -> f64 {
        if self.n_traj == 0 {
            0.0
        } else {
            self.prep_failures as f64 / self.n_traj as f64
        }
    }
}

/// Success probability after one Grover iteration on two logical qubits,
/// encoded and bare, at `γ = ε / C`.
///
/// An encoded trajectory prepares two verified blocks, runs the transversal
/// network, and scores the exact probability that both blocks decode to
/// logical 0. A trajectory whose preparation runs out of restarts scores 0.
/// The bare arm uses streams offset by [`BARE_STREAM_OFFSET`].
pub fn run_encoded_experiment(epsilon: f64, ratio: f64, run: &McRun, max_restarts: usize) -> Result<EncodedResult> {
    let params = params_for_ratio(epsilon, ratio)?;
    run_encoded_with(&params, ratio, run, max_restarts)
}

pub fn run_encoded_with(params: &NoiseParams, ratio: f64, run: &McRun, max_restarts: usize) -> Result<EncodedResult> {
    if run.n_trajectories < 1 {
        return domain("need at least one trajectory");
    }
    let network = build_encoded_grover()?;
    let reg = EncodedRegister::contiguous(2);
    let t = run_tally(run, |rng, acc| {
        let mut blocks = Vec::with_capacity(2);
        for _ in 0..2 {
            match prepare_zero_ft(params, rng, max_restarts) {
                Ok(p) => {
                    acc.attempts += p.attempts as f64;
                    acc.prepared_blocks += 1;
                    blocks.push(p.state);
                }
                Err(Error::PreparationFailed { .. }) => {
                    acc.failures += 1;
                    return Ok(());
                }
                Err(e) => return Err(e),
            }
        }
        let mut s = blocks[0].tensor(&blocks[1])?;
        run_layers(&network, params, rng, &mut s);
        let p = decoded_zero_probability(&s, &reg)?;
        acc.sum += p;
        acc.sum_sq += p * p;
        Ok(())
    })?;
    let bare_run = McRun { first_stream: run.first_stream + BARE_STREAM_OFFSET, check_convergence: false, ..*run };
    let bare = estimate_success_curve(2, params, 1, &bare_run)?;
    let (bare_ps, bare_stderr) = bare.at(1).ok_or_else(|| Error::Internal("missing t = 1".into()))?;
    Ok(EncodedResult {
        epsilon: params.epsilon,
        gamma: params.gamma,
        ratio,
        encoded_ps: t.mean(),
        encoded_stderr: t.std_err(),
        bare_ps,
        bare_stderr,
        mean_attempts: if t.prepared_blocks > 0 {
            t.attempts / t.prepared_blocks as f64
        } else {
            0.0
        },
        prep_failures: t.failures,
        n_traj: t.count,
        seed: run.master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_integrity() {
        let t = tables();
        assert_eq!(t.parity_check, [0b1010101, 0b1100110, 0b1111000]);
        assert_eq!(min_distance(&t.dual_codewords), 4);
        assert_eq!(min_distance(&t.codewords), 3);
        assert!(t.dual_codewords.iter().all(|&w| w.count_ones() % 4 == 0));
        // C is exactly the kernel of the parity check, by brute force
        let kernel: Vec<u8> = (0..128u8)
            .filter(|&w| t.parity_check.iter().all(|r| (w & r).count_ones() % 2 == 0))
            .collect();
        assert_eq!(kernel, t.codewords);
    }

    #[test]
    fn decode_examples() {
        let t = tables();
        assert_eq!(
            classical_decode(0, t).unwrap(),
            Decoded { logical: 0, corrected: 0, detected: false }
        );
        assert_eq!(
            classical_decode(ALL_ONES, t).unwrap(),
            Decoded { logical: 1, corrected: ALL_ONES, detected: false }
        );
        for &c in &t.dual_codewords {
            for j in 0..7 {
                let d = classical_decode(c ^ (1 << j), t).unwrap();
                assert_eq!(d, Decoded { logical: 0, corrected: c, detected: true });
            }
        }
        for &c in &t.dual_codewords {
            let d = classical_decode(c ^ ALL_ONES, t).unwrap();
            assert_eq!(d.logical, 1);
        }
        // every word decodes; the Hamming code is perfect
        assert!((0..128u8).all(|w| classical_decode(w, t).is_ok()));
    }

    #[test]
    fn logical_states() {
        let z = logical_zero_ideal();
        assert!((z.amplitude(0).re - 1.0 / 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(z.amplitudes().iter().filter(|a| a.norm() > 0.0).count(), 8);
        let mut h = z.clone();
        for q in 0..7 {
            h.apply_gate(&Gate::h(q)).unwrap();
        }
        let one = logical_one_ideal();
        let r = 0.5f64.sqrt();
        for i in 0..128 {
            let expect = r * (z.amplitude(i) + one.amplitude(i));
            assert!((h.amplitude(i) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn weight_equivalence_complete() {
        let t = tables();
        let eq = weight_equivalence_check(t).unwrap();
        assert_eq!(eq.forward.len(), 21);
        assert_eq!(eq.inverse.len(), 7);
        for &(v, u) in &eq.forward {
            assert!(t.in_code(v ^ u ^ ALL_ONES) && !t.in_dual(v ^ u));
        }
        let ph = phase_equivalence_check(t).unwrap();
        assert_eq!(ph.len(), 21);
        assert!(ph.iter().all(|&(v, u)| t.in_code(v ^ u)));
    }

    #[test]
    fn synthesis_network_shape() {
        let c = build_zero_synthesis_network(tables()).unwrap();
        let h = c.gates().filter(|g| g.kind() == GateKind::H).count();
        let cx = c.gates().filter(|g| g.kind() == GateKind::Cnot).count();
        let weight: u32 = tables().generator().iter().map(|r| r.count_ones()).sum();
        assert_eq!(h, 3);
        assert_eq!(cx as u32, weight - 3);
        assert_eq!(c.depth(), 4);
        let mut s = StateVector::zero(7).unwrap();
        c.apply(&mut s).unwrap();
        assert!(s.max_abs_diff(&logical_zero_ideal()) < 1e-12);
    }

    #[test]
    fn transversal_logic() {
        let reg = EncodedRegister::contiguous(2);
        let one = EncodedRegister::contiguous(1);
        let mut z = logical_zero_ideal();
        for g in transversal_gate(Transversal::X, &one, &[0]).unwrap() {
            z.apply_gate(&g).unwrap();
        }
        assert!(z.max_abs_diff(&logical_one_ideal()) < 1e-12);

        // |+_E⟩|0_E⟩ → encoded Bell pair
        let mut s = logical_zero_ideal().tensor(&logical_zero_ideal()).unwrap();
        for g in transversal_gate(Transversal::H, &reg, &[0]).unwrap() {
            s.apply_gate(&g).unwrap();
        }
        for g in transversal_gate(Transversal::Cnot, &reg, &[0, 1]).unwrap() {
            s.apply_gate(&g).unwrap();
        }
        let t = tables();
        let mut joint = [[0.0; 2]; 2];
        for (i, a) in s.amplitudes().iter().enumerate() {
            let l0 = t.logical_of(reg.block_word(0, i)) as usize;
            let l1 = t.logical_of(reg.block_word(1, i)) as usize;
            joint[l0][l1] += a.norm_sqr();
        }
        assert!((joint[0][0] - 0.5).abs() < 1e-12 && (joint[1][1] - 0.5).abs() < 1e-12);
        assert!(joint[0][1] < 1e-12 && joint[1][0] < 1e-12);
        // syndromes stay zero in both blocks
        for (i, a) in s.amplitudes().iter().enumerate() {
            if a.norm_sqr() > 1e-15 {
                assert_eq!(t.syndrome(reg.block_word(0, i)), 0);
                assert_eq!(t.syndrome(reg.block_word(1, i)), 0);
            }
        }
        assert!(transversal_gate(Transversal::Cnot, &reg, &[1, 1]).is_err());
        assert!(transversal_gate(Transversal::H, &reg, &[0, 1]).is_err());
        assert!(EncodedRegister::new(vec![0, 5]).is_err());
    }

    #[test]
    fn verification_catches_all_flips() {
        let t = tables();
        let zero = logical_zero_ideal();
        for v in 1..128u8 {
            let a = flipped(&zero, v);
            let dist = verification_distribution(&a, &zero).unwrap();
            let passes = dist
                .iter()
                .enumerate()
                .any(|(w, &p)| p > 1e-15 && t.in_dual(w as u8));
            // flips by a C⊥ word are stabilizers and leave |0_E⟩ unchanged
            assert!(!passes || a.max_abs_diff(&zero) < 1e-12, "v = {v:07b}");
            assert_eq!(passes, t.in_dual(v));
        }
    }

    #[test]
    fn convolution_matches_dense_coupling() {
        // random-ish Pauli-damaged blocks, dense 14-qubit CNOT + measurement as oracle
        let zero = logical_zero_ideal();
        let mut a = zero.clone();
        a.apply_pauli(&PauliWord::from_masks(0b0000011, 0b0100000)).unwrap();
        let mut b = zero.clone();
        b.apply_pauli(&PauliWord::from_masks(0b1000000, 0b0000101)).unwrap();
        let mut dense = a.tensor(&b).unwrap();
        for i in 0..7 {
            dense.apply_gate(&Gate::cnot(i, i + 7)).unwrap();
        }
        let dist = verification_distribution(&a, &b).unwrap();
        for w in 0..128usize {
            let p: f64 = (0..128).map(|x| dense.probability(x | (w << 7))).sum();
            assert!((p - dist[w]).abs() < 1e-12);
            if p > 1e-12 {
                let post = post_verification(&a, &b, w as u8).unwrap();
                let ext = dense.extract_unfixed(0x7f << 7, w << 7).unwrap();
                assert!(post.fidelity(&ext) > 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_preparation() {
        let mut rng = RandomStream::new(3, 0);
        for _ in 0..20 {
            let p = prepare_zero_ft(&NoiseParams::noiseless(), &mut rng, 1).unwrap();
            assert_eq!(p.attempts, 1);
            assert!(tables().in_dual(p.verification_word));
            assert!(p.state.fidelity(&logical_zero_ideal()) > 1.0 - 1e-12);
        }
        assert!(prepare_zero_ft(&NoiseParams::noiseless(), &mut rng, 0).is_err());
    }

    #[test]
    fn exhausted_restarts() {
        let p = NoiseParams::new(0.5, 0.5).unwrap();
        let mut fails = 0;
        for i in 0..50 {
            let mut rng = RandomStream::new(1, i);
            if prepare_zero_ft(&p, &mut rng, 1).is_err() {
                fails += 1;
            }
        }
        assert!(fails > 10);
    }

    #[test]
    fn encoded_noiseless_grover() {
        let c = build_encoded_grover().unwrap();
        let mut s = logical_zero_ideal().tensor(&logical_zero_ideal()).unwrap();
        c.apply(&mut s).unwrap();
        let p = decoded_zero_probability(&s, &EncodedRegister::contiguous(2)).unwrap();
        assert!((p - 1.0).abs() < 1e-9);
        let r = run_encoded_experiment(0.0, 1.0, &McRun::new(4, 1), 3).unwrap();
        assert!((r.encoded_ps - 1.0).abs() < 1e-9);
        assert!((r.bare_ps - 1.0).abs() < 1e-9);
        assert_eq!(r.mean_attempts, 1.0);
    }

    #[test]
    fn encoded_deterministic_across_workers() {
        let a = run_encoded_experiment(0.003, 1.0, &McRun::new(70, 8).workers(Some(1)), 50).unwrap();
        let b = run_encoded_experiment(0.003, 1.0, &McRun::new(70, 8).workers(Some(3)), 50).unwrap();
        assert_eq!(a, b);
    }
}
