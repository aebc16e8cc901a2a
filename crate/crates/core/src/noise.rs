//! Independent stochastic Pauli error model.
//!
//! Every time step (layer) carries a depolarizing memory error on every qubit
//! of the register: `I` with probability `1 - ε`, each of `X`, `Y`, `Z` with
//! `ε/3`. Every gate is followed by a depolarizing gate error on its support:
//! the identity with probability `1 - γ`, otherwise one of the `4^k - 1`
//! non-identity words, uniformly.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate};
use crate::error::{domain, Result};
use crate::qstate::{Pauli, PauliOp, PauliWord, StateVector};

/// Which qubits receive a memory error in a layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryMode {
    /// Every qubit, in addition to any gate error.
    #[default]
    Additive,
    /// Only the qubits no gate touches in that layer.
    IdleOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub epsilon: f64,
    pub gamma: f64,
    #[serde(default)]
    pub memory: MemoryMode,
}

impl NoiseParams {
    pub fn new(epsilon: f64, gamma: f64) -> Result<NoiseParams> {
        for (name, p) in [("epsilon", epsilon), ("gamma", gamma)] {
            if !(0.0..=1.0).contains(&p) {
                return domain(format!("{name} = {p} is not a probability"));
            }
        }
        Ok(NoiseParams {
            epsilon,
            gamma,
            memory: MemoryMode::Additive,
        })
    }

    pub fn noiseless() -> NoiseParams {
        NoiseParams {
            epsilon: 0.0,
            gamma: 0.0,
            memory: MemoryMode::Additive,
        }
    }

    /// `γ = ε / C`; `C = ∞` gives `γ = 0` exactly.
    pub fn from_ratio(epsilon: f64, ratio: f64) -> Result<NoiseParams> {
        if !(ratio > 0.0) {
            return domain(format!("ratio C = {ratio} must be positive"));
        }
        NoiseParams::new(epsilon, epsilon / ratio)
    }

    pub fn with_memory(mut self, memory: MemoryMode) -> NoiseParams {
        self.memory = memory;
        self
    }

    /// `C = ε/γ`, infinite when `γ = 0`.
    pub fn ratio(&self) -> f64 {
        if self.gamma == 0.0 {
            f64::INFINITY
        } else {
            self.epsilon / self.gamma
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.epsilon == 0.0 && self.gamma == 0.0
    }
}

/// A reproducible random stream: ChaCha8 keyed by the master seed, with the
/// trajectory index selecting one of its 2^64 independent streams.
#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    master_seed: u64,
    stream_index: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_index: u64) -> RandomStream {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        RandomStream {
            rng,
            master_seed,
            stream_index,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Draws one depolarizing outcome: `None` with probability `1 - p`, otherwise
/// a uniform choice among `options` non-identity outcomes. Exactly one uniform
/// is consumed per call, whatever the outcome, so streams stay aligned across
/// parameter values.
#[inline]
fn depolarize<R: Rng + ?Sized>(p: f64, options: u32, rng: &mut R) -> Option<u32> {
    let u: f64 = rng.gen();
    if u < p {
        Some(((u / p * options as f64) as u32).min(options - 1))
    } else {
        None
    }
}

/// Memory error over the qubits set in `qubits`.
pub fn sample_memory_word<R: Rng + ?Sized>(qubits: u64, epsilon: f64, rng: &mut R) -> PauliWord {
    let mut w = PauliWord::IDENTITY;
    let mut rest = qubits;
    while rest != 0 {
        let q = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        if let Some(d) = depolarize(epsilon, 3, rng) {
            w.set(q, Pauli::from_digit(d + 1));
        }
    }
    w
}

/// Gate error on the gate's support: `γ/3`, `γ/15` or `γ/63` per word for
/// one-, two- and three-qubit gates.
pub fn sample_gate_error<R: Rng + ?Sized>(gate: &Gate, gamma: f64, rng: &mut R) -> PauliWord {
    let qubits = gate.qubits();
    let options = (1u32 << (2 * qubits.len())) - 1;
    let mut w = PauliWord::IDENTITY;
    if let Some(d) = depolarize(gamma, options, rng) {
        let mut digits = d + 1;
        for &q in qubits {
            w.set(q, Pauli::from_digit(digits & 3));
            digits >>= 2;
        }
    }
    w
}

/// Counts of sampled error locations in one trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ErrorTally {
    pub memory_events: usize,
    pub gate_events: usize,
    pub memory_errors: usize,
    pub gate_errors: usize,
}

impl ErrorTally {
    pub fn merge(&mut self, other: ErrorTally) {
        self.memory_events += other.memory_events;
        self.gate_events += other.gate_events;
        self.memory_errors += other.memory_errors;
        self.gate_errors += other.gate_errors;
    }
}

/// Runs `circuit` on `state` with sampled errors, in place.
///
/// Per layer: every ideal gate followed by its gate error, then one memory
/// word for the time step. Single-qubit Pauli gates and all error words of a
/// layer act on disjoint qubits (or commute past the layer's other gates), so
/// they are folded into one Pauli pass after the layer's non-Pauli gates.
pub fn run_noisy_trajectory(
    circuit: &Circuit,
    params: &NoiseParams,
    rng: &mut RandomStream,
    state: &mut StateVector,
) -> Result<ErrorTally> {
    if state.num_qubits() != circuit.num_qubits() {
        return domain(format!(
            "circuit has {} qubits, state has {}",
            circuit.num_qubits(),
            state.num_qubits()
        ));
    }
    Ok(run_layers(circuit, params, rng, state))
}

pub(crate) fn run_layers(
    circuit: &Circuit,
    params: &NoiseParams,
    rng: &mut RandomStream,
    state: &mut StateVector,
) -> ErrorTally {
    let all = if circuit.num_qubits() == 64 {
        u64::MAX
    } else {
        (1u64 << circuit.num_qubits()) - 1
    };
    let mut tally = ErrorTally::default();
    for layer in circuit.layers() {
        let mut op = PauliOp::default();
        for g in &layer.gates {
            if g.kind().is_pauli() {
                op = op.then(gate_as_op(g));
            } else {
                state.apply_gate_unchecked(g);
            }
            let e = sample_gate_error(g, params.gamma, rng);
            tally.gate_events += 1;
            if !e.is_identity() {
                tally.gate_errors += 1;
                op = op.then(e.to_op());
            }
        }
        let exposed = match params.memory {
            MemoryMode::Additive => all,
            MemoryMode::IdleOnly => all & !layer.mask(),
        };
        let m = sample_memory_word(exposed, params.epsilon, rng);
        tally.memory_events += 1;
        if !m.is_identity() {
            tally.memory_errors += 1;
            op = op.then(m.to_op());
        }
        if !op.is_identity() {
            state.apply_op(op);
        }
    }
    tally
}

fn gate_as_op(g: &Gate) -> PauliOp {
    let q = g.qubits()[0];
    let letter = match g.kind() {
        crate::circuit::GateKind::X => Pauli::X,
        crate::circuit::GateKind::Y => Pauli::Y,
        _ => Pauli::Z,
    };
    PauliWord::single(q, letter).to_op()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_grover_gate, schedule_layers};

    /// Pearson χ² statistic of observed counts against expected probabilities.
    fn chi2(counts: &[u64], probs: &[f64]) -> f64 {
        let n: u64 = counts.iter().sum();
        counts
            .iter()
            .zip(probs)
            .map(|(&c, &p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum()
    }

    #[test]
    fn params_validation() {
        assert!(NoiseParams::new(-0.1, 0.0).is_err());
        assert!(NoiseParams::new(0.0, 1.5).is_err());
        let p = NoiseParams::from_ratio(0.01, f64::INFINITY).unwrap();
        assert_eq!(p.gamma, 0.0);
        assert_eq!(p.ratio(), f64::INFINITY);
        assert!((NoiseParams::from_ratio(0.01, 2.0).unwrap().gamma - 0.005).abs() < 1e-18);
        assert!(NoiseParams::from_ratio(0.01, 0.0).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8).map({
            let mut r = RandomStream::new(5, 9);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = RandomStream::new(5, 9);
            move |_| r.next_u64()
        }).collect();
        let c: Vec<u64> = (0..8).map({
            let mut r = RandomStream::new(5, 10);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_noise_never_errs() {
        let mut rng = RandomStream::new(1, 0);
        for _ in 0..1000 {
            assert!(sample_memory_word(0b1111, 0.0, &mut rng).is_identity());
            assert!(sample_gate_error(&Gate::toffoli(0, 1, 2), 0.0, &mut rng).is_identity());
        }
    }

    #[test]
    fn memory_word_distribution() {
        let draws = 100_000;
        for (eps, probs) in [(1.0, [0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]), (0.3, [0.7, 0.1, 0.1, 0.1])] {
            let mut rng = RandomStream::new(42, 0);
            let mut counts = [0u64; 4];
            for _ in 0..draws {
                let w = sample_memory_word(1, eps, &mut rng);
                counts[w.get(0) as usize] += 1;
            }
            if eps == 1.0 {
                assert_eq!(counts[0], 0);
                // 3 categories: χ²(2) critical value at p = 0.001 is 13.82
                assert!(chi2(&counts[1..], &probs[1..]) < 13.82, "{counts:?}");
            } else {
                // χ²(3) at p = 0.001: 16.27
                assert!(chi2(&counts, &probs) < 16.27, "{counts:?}");
            }
        }
    }

    #[test]
    fn cnot_error_distribution() {
        let draws = 200_000;
        let mut rng = RandomStream::new(7, 3);
        let g = Gate::cnot(0, 1);
        let mut counts = [0u64; 16];
        for _ in 0..draws {
            let w = sample_gate_error(&g, 0.15, &mut rng);
            counts[w.get(0) as usize + 4 * w.get(1) as usize] += 1;
        }
        let mut probs = [0.01; 16];
        probs[0] = 0.85;
        // χ²(15) at p = 0.001: 37.70
        assert!(chi2(&counts, &probs) < 37.70, "{counts:?}");
    }

    #[test]
    fn error_locations_per_trajectory() {
        let c = build_grover_gate(4).unwrap();
        let p = NoiseParams::new(0.05, 0.05).unwrap();
        let mut s = StateVector::zero(c.num_qubits()).unwrap();
        let mut rng = RandomStream::new(0, 0);
        let t = run_noisy_trajectory(&c, &p, &mut rng, &mut s).unwrap();
        assert_eq!(t.memory_events, c.depth());
        assert_eq!(t.gate_events, c.gate_count());
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_trajectory_is_bit_identical() {
        for n in 2..=5 {
            let c = build_grover_gate(n).unwrap();
            let m = c.num_qubits();
            let mut ideal = StateVector::zero(m).unwrap();
            for q in 0..n {
                ideal.apply_gate(&Gate::h(q)).unwrap();
            }
            let mut noisy = ideal.clone();
            c.apply(&mut ideal).unwrap();
            let mut rng = RandomStream::new(9, 9);
            run_noisy_trajectory(&c, &NoiseParams::noiseless(), &mut rng, &mut noisy).unwrap();
            assert_eq!(ideal, noisy);
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let c = build_grover_gate(3).unwrap();
        let p = NoiseParams::new(0.02, 0.03).unwrap();
        let run = || {
            let mut s = StateVector::zero(c.num_qubits()).unwrap();
            let mut rng = RandomStream::new(77, 5);
            for _ in 0..5 {
                run_noisy_trajectory(&c, &p, &mut rng, &mut s).unwrap();
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn idle_only_skips_busy_qubits() {
        let c = schedule_layers(2, 0, &[Gate::h(0)]).unwrap();
        let p = NoiseParams::new(1.0, 0.0).unwrap().with_memory(MemoryMode::IdleOnly);
        let mut rng = RandomStream::new(1, 1);
        for _ in 0..50 {
            let mut s = StateVector::zero(2).unwrap();
            run_noisy_trajectory(&c, &p, &mut rng, &mut s).unwrap();
            // qubit 0 only sees H; qubit 1 always gets X, Y or Z
            let q0_zero = s.marginal_probability(&[0], &[false]).unwrap();
            assert!((q0_zero - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let c = build_grover_gate(2).unwrap();
        let mut s = StateVector::zero(3).unwrap();
        let mut rng = RandomStream::new(0, 0);
        assert!(run_noisy_trajectory(&c, &NoiseParams::noiseless(), &mut rng, &mut s).is_err());
    }
}
