//! Exact noisy evolution for small registers, independent of the trajectory
//! sampler: a density matrix pushed through each layer's depolarizing
//! channels, and a literal sum over every error branch.
//!
//! Gate matrices here are built column by column from their definitions and
//! do not share code with the state-vector kernels.

use num_complex::Complex64;

use crate::circuit::{build_grover_gate, build_uniform_superposition, grover_ancillas, Circuit, Gate, GateKind};
use crate::error::{domain, Result};
use crate::noise::{MemoryMode, NoiseParams};
use crate::qstate::{Pauli, PauliWord, StateVector};

/// Largest register handled by [`DensityMatrix`].
pub const MAX_EXACT_QUBITS: usize = 8;

type Column = Vec<(usize, Complex64)>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Sparse columns of a gate's unitary on `n` qubits.
fn gate_columns(g: &Gate, n: usize) -> Vec<Column> {
    let q = g.qubits();
    let bit = |i: usize, k: usize| (i >> q[k]) & 1;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    (0..1usize << n)
        .map(|i| match g.kind() {
            GateKind::H => {
                let j = i ^ (1 << q[0]);
                if bit(i, 0) == 0 {
                    vec![(i, c(r, 0.0)), (j, c(r, 0.0))]
                } else {
                    vec![(j, c(r, 0.0)), (i, c(-r, 0.0))]
                }
            }
            GateKind::X => vec![(i ^ (1 << q[0]), c(1.0, 0.0))],
            GateKind::Y => {
                let ph = if bit(i, 0) == 0 { c(0.0, 1.0) } else { c(0.0, -1.0) };
                vec![(i ^ (1 << q[0]), ph)]
            }
            GateKind::Z => vec![(i, c(if bit(i, 0) == 0 { 1.0 } else { -1.0 }, 0.0))],
            GateKind::Cnot => {
                let j = if bit(i, 0) == 1 { i ^ (1 << q[1]) } else { i };
                vec![(j, c(1.0, 0.0))]
            }
            GateKind::Toffoli => {
                let j = if bit(i, 0) == 1 && bit(i, 1) == 1 { i ^ (1 << q[2]) } else { i };
                vec![(j, c(1.0, 0.0))]
            }
        })
        .collect()
}

/// Sparse columns of a Pauli word, from the single-qubit matrices.
fn pauli_columns(w: &PauliWord, n: usize) -> Vec<Column> {
    (0..1usize << n)
        .map(|i| {
            let mut ph = c(1.0, 0.0);
            let mut j = i;
            for q in 0..n {
                let b = (i >> q) & 1;
                match w.get(q) {
                    Pauli::I => {}
                    Pauli::X => j ^= 1 << q,
                    Pauli::Y => {
                        j ^= 1 << q;
                        ph *= if b == 0 { c(0.0, 1.0) } else { c(0.0, -1.0) };
                    }
                    Pauli::Z => {
                        if b == 1 {
                            ph = -ph;
                        }
                    }
                }
            }
            vec![(j, ph)]
        })
        .collect()
}

/// All Pauli words on the qubits of `support`, identity first.
fn words_on(support: &[usize]) -> Vec<PauliWord> {
    let k = support.len();
    (0..4u32.pow(k as u32))
        .map(|mut d| {
            let mut w = PauliWord::IDENTITY;
            for &q in support {
                w.set(q, Pauli::from_digit(d % 4));
                d /= 4;
            }
            w
        })
        .collect()
}

/// Dense row-major density matrix.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    n: usize,
    dim: usize,
    rho: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn from_state(s: &StateVector) -> Result<DensityMatrix> {
        let n = s.num_qubits();
        if n > MAX_EXACT_QUBITS {
            return domain(format!("{n} qubits exceed the exact limit {MAX_EXACT_QUBITS}"));
        }
        let a = s.amplitudes();
        let dim = a.len();
        let mut rho = vec![c(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                rho[i * dim + j] = a[i] * a[j].conj();
            }
        }
        Ok(DensityMatrix { n, dim, rho })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.rho[i * self.dim + i].re).sum()
    }

    /// Diagonal entry `⟨i|ρ|i⟩`.
    pub fn population(&self, i: usize) -> f64 {
        self.rho[i * self.dim + i].re
    }

    /// Probability that the low `num_low` qubits read all zero.
    pub fn low_register_zero_probability(&self, num_low: usize) -> f64 {
        (0..self.dim >> num_low).map(|h| self.population(h << num_low)).sum()
    }

    /// `ρ → U ρ U†` for `U` given by sparse columns.
    fn conjugate(&self, cols: &[Column]) -> Vec<Complex64> {
        let d = self.dim;
        let mut left = vec![c(0.0, 0.0); d * d];
        for (k, col) in cols.iter().enumerate() {
            for &(r, u) in col {
                for j in 0..d {
                    left[r * d + j] += u * self.rho[k * d + j];
                }
            }
        }
        let mut out = vec![c(0.0, 0.0); d * d];
        for (k, col) in cols.iter().enumerate() {
            for &(r, u) in col {
                let uc = u.conj();
                for i in 0..d {
                    out[i * d + r] += left[i * d + k] * uc;
                }
            }
        }
        out
    }

    pub fn apply_gate(&mut self, g: &Gate) -> Result<()> {
        g.validate(self.n)?;
        self.rho = self.conjugate(&gate_columns(g, self.n));
        Ok(())
    }

    /// `ρ → Σ_k p_k P_k ρ P_k†`.
    pub fn apply_pauli_channel(&mut self, terms: &[(f64, PauliWord)]) {
        let mut out = vec![c(0.0, 0.0); self.dim * self.dim];
        for (p, w) in terms {
            if *p == 0.0 {
                continue;
            }
            let t = self.conjugate(&pauli_columns(w, self.n));
            for (o, x) in out.iter_mut().zip(t) {
                *o += x * *p;
            }
        }
        self.rho = out;
    }

    /// Depolarizing channel of total strength `p` over the words of `support`.
    pub fn depolarize(&mut self, support: &[usize], p: f64) {
        if p == 0.0 || support.is_empty() {
            return;
        }
        let words = words_on(support);
        let each = p / (words.len() - 1) as f64;
        let terms: Vec<(f64, PauliWord)> = words
            .into_iter()
            .enumerate()
            .map(|(i, w)| (if i == 0 { 1.0 - p } else { each }, w))
            .collect();
        self.apply_pauli_channel(&terms);
    }

    /// One layer per time step: ideal gates, each gate's error channel, then
    /// an independent single-qubit memory channel on every exposed qubit.
    pub fn run_circuit(&mut self, circuit: &Circuit, params: &NoiseParams) -> Result<()> {
        if circuit.num_qubits() != self.n {
            return domain("circuit and density matrix sizes differ");
        }
        for layer in circuit.layers() {
            for g in &layer.gates {
                self.apply_gate(g)?;
                self.depolarize(g.qubits(), params.gamma);
            }
            let busy = layer.mask();
            for q in 0..self.n {
                if params.memory == MemoryMode::IdleOnly && (busy >> q) & 1 == 1 {
                    continue;
                }
                self.depolarize(&[q], params.epsilon);
            }
        }
        Ok(())
    }
}

/// Exact success curve `t = 0..=t_max` of the noisy Grover search.
pub fn exact_success_curve(n: usize, params: &NoiseParams, t_max: usize) -> Result<Vec<f64>> {
    let grover = build_grover_gate(n)?;
    let sup = build_uniform_superposition(n)?.widened(grover_ancillas(n));
    let mut rho = DensityMatrix::from_state(&StateVector::zero(grover.num_qubits())?)?;
    rho.run_circuit(&sup, params)?;
    let mut out = vec![rho.low_register_zero_probability(n)];
    for _ in 0..t_max {
        rho.run_circuit(&grover, params)?;
        out.push(rho.low_register_zero_probability(n));
    }
    Ok(out)
}

/// One error branch: its probability and the resulting pure state.
#[derive(Clone, Debug)]
pub struct Branch {
    pub probability: f64,
    pub state: StateVector,
}

/// Every assignment of error words to the circuit's error locations, with its
/// probability. Refuses circuits with more than `max_branches` branches.
pub fn enumerate_branches(
    circuit: &Circuit,
    params: &NoiseParams,
    input: &StateVector,
    max_branches: usize,
) -> Result<Vec<Branch>> {
    let n = circuit.num_qubits();
    if input.num_qubits() != n {
        return domain("circuit and state sizes differ");
    }
    // error locations in time order, each with its weighted options
    enum Step {
        Gate(Gate),
        Error(Vec<(f64, PauliWord)>),
    }
    let options = |support: &[usize], p: f64| -> Vec<(f64, PauliWord)> {
        let words = words_on(support);
        let each = p / (words.len() - 1) as f64;
        words
            .into_iter()
            .enumerate()
            .map(|(i, w)| (if i == 0 { 1.0 - p } else { each }, w))
            .filter(|(q, _)| *q > 0.0)
            .collect()
    };
    let mut steps = Vec::new();
    for layer in circuit.layers() {
        for g in &layer.gates {
            steps.push(Step::Gate(*g));
            steps.push(Step::Error(options(g.qubits(), params.gamma)));
        }
        let busy = layer.mask();
        for q in 0..n {
            if params.memory == MemoryMode::IdleOnly && (busy >> q) & 1 == 1 {
                continue;
            }
            steps.push(Step::Error(options(&[q], params.epsilon)));
        }
    }
    let mut count = 1usize;
    for s in &steps {
        if let Step::Error(o) = s {
            count = count.saturating_mul(o.len());
        }
    }
    if count > max_branches {
        return domain(format!("{count} branches exceed the limit {max_branches}"));
    }
    let mut branches = vec![Branch {
        probability: 1.0,
        state: input.clone(),
    }];
    for s in &steps {
        match s {
            Step::Gate(g) => {
                for b in &mut branches {
                    b.state.apply_gate(g)?;
                }
            }
            Step::Error(opts) => {
                let mut next = Vec::with_capacity(branches.len() * opts.len());
                for b in &branches {
                    for (p, w) in opts {
                        let mut st = b.state.clone();
                        st.apply_pauli(w)?;
                        next.push(Branch {
                            probability: b.probability * p,
                            state: st,
                        });
                    }
                }
                branches = next;
            }
        }
    }
    Ok(branches)
}
