//! Gate-level circuits with explicit time-step layers, and the Grover network
//! for the searched state `|0…0⟩`.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::qstate::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    Cnot,
    Toffoli,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::H | GateKind::X | GateKind::Y | GateKind::Z => 1,
            GateKind::Cnot => 2,
            GateKind::Toffoli => 3,
        }
    }

    pub fn is_pauli(self) -> bool {
        matches!(self, GateKind::X | GateKind::Y | GateKind::Z)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::Cnot => "CNOT",
            GateKind::Toffoli => "TOFFOLI",
        }
    }
}

/// A gate and the qubits it acts on. For `Cnot` the order is
/// `(control, target)`, for `Toffoli` `(control, control, target)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gate {
    kind: GateKind,
    qubits: [usize; 3],
}

impl Gate {
    pub fn new(kind: GateKind, qubits: &[usize]) -> Result<Gate> {
        if qubits.len() != kind.arity() {
            return domain(format!(
                "{} takes {} qubits, got {}",
                kind.name(),
                kind.arity(),
                qubits.len()
            ));
        }
        let mut q = [0; 3];
        q[..qubits.len()].copy_from_slice(qubits);
        let g = Gate { kind, qubits: q };
        g.check_distinct()?;
        Ok(g)
    }

    pub fn h(q: usize) -> Gate {
        Gate { kind: GateKind::H, qubits: [q, 0, 0] }
    }

    pub fn x(q: usize) -> Gate {
        Gate { kind: GateKind::X, qubits: [q, 0, 0] }
    }

    pub fn y(q: usize) -> Gate {
        Gate { kind: GateKind::Y, qubits: [q, 0, 0] }
    }

    pub fn z(q: usize) -> Gate {
        Gate { kind: GateKind::Z, qubits: [q, 0, 0] }
    }

    pub fn cnot(control: usize, target: usize) -> Gate {
        Gate { kind: GateKind::Cnot, qubits: [control, target, 0] }
    }

    pub fn toffoli(c0: usize, c1: usize, target: usize) -> Gate {
        Gate { kind: GateKind::Toffoli, qubits: [c0, c1, target] }
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn mask(&self) -> u64 {
        self.qubits().iter().fold(0, |m, &q| m | (1u64 << q))
    }

    /// Checks arity, distinctness and that every index is below `num_qubits`.
    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        self.check_distinct()?;
        if let Some(&q) = self.qubits().iter().find(|&&q| q >= num_qubits) {
            return domain(format!("{self}: qubit {q} out of range for {num_qubits} qubits"));
        }
        Ok(())
    }

    fn check_distinct(&self) -> Result<()> {
        let q = self.qubits();
        for i in 0..q.len() {
            if q[i] >= 64 {
                return domain(format!("{self}: qubit index {} too large", q[i]));
            }
            if q[..i].contains(&q[i]) {
                return domain(format!("{self}: repeated qubit {}", q[i]));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.name())?;
        for q in self.qubits() {
            write!(f, " {q}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerLabel {
    Superposition,
    Oracle,
    Inversion,
    Synthesis,
    Verification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub gates: Vec<Gate>,
    pub label: Option<LayerLabel>,
}

impl Layer {
    pub fn mask(&self) -> u64 {
        self.gates.iter().fold(0, |m, g| m | g.mask())
    }
}

/// A layered circuit: every layer is one time step of gates on pairwise
/// disjoint qubits. Data qubits are `0..num_data`; ancillas follow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    num_data: usize,
    num_ancilla: usize,
    layers: Vec<Layer>,
}

impl Circuit {
    pub fn new(num_data: usize, num_ancilla: usize) -> Circuit {
        Circuit {
            num_data,
            num_ancilla,
            layers: Vec::new(),
        }
    }

    /// Builds a circuit from explicit layers, checking disjointness and range.
    pub fn from_layers(num_data: usize, num_ancilla: usize, layers: Vec<Layer>) -> Result<Circuit> {
        let c = Circuit {
            num_data,
            num_ancilla,
            layers,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn num_data(&self) -> usize {
        self.num_data
    }

    pub fn num_ancilla(&self) -> usize {
        self.num_ancilla
    }

    pub fn num_qubits(&self) -> usize {
        self.num_data + self.num_ancilla
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(|l| l.gates.len()).sum()
    }

    pub fn gates(&self) -> impl Iterator<Item = &Gate> + '_ {
        self.layers.iter().flat_map(|l| l.gates.iter())
    }

    /// Same gates on a register widened by `extra` idle ancillas.
    pub fn widened(mut self, extra: usize) -> Circuit {
        self.num_ancilla += extra;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_qubits();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut used = 0u64;
            for g in &layer.gates {
                g.validate(m)?;
                if used & g.mask() != 0 {
                    return domain(format!("layer {i}: {g} overlaps another gate"));
                }
                used |= g.mask();
            }
        }
        Ok(())
    }

    /// Noiseless action on `state`.
    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        if state.num_qubits() != self.num_qubits() {
            return domain(format!(
                "circuit has {} qubits, state has {}",
                self.num_qubits(),
                state.num_qubits()
            ));
        }
        for g in self.gates() {
            state.apply_gate_unchecked(g);
        }
        Ok(())
    }

    /// Text diagram: one row per qubit, one column per layer. `*` marks a
    /// control, `+` a controlled-NOT target.
    pub fn diagram(&self) -> String {
        let m = self.num_qubits();
        let mut rows: Vec<String> = (0..m)
            .map(|q| {
                if q < self.num_data {
                    format!("q{q:<3}")
                } else {
                    format!("a{:<3}", q - self.num_data)
                }
            })
            .collect();
        for layer in &self.layers {
            let mut cells = vec!["-"; m];
            for g in &layer.gates {
                let q = g.qubits();
                match g.kind() {
                    GateKind::Cnot | GateKind::Toffoli => {
                        let (t, cs) = q.split_last().unwrap();
                        for &c in cs {
                            cells[c] = "*";
                        }
                        cells[*t] = "+";
                    }
                    k => cells[q[0]] = k.name(),
                }
            }
            for (row, cell) in rows.iter_mut().zip(cells) {
                let _ = write!(row, "-{cell:-^3}");
            }
        }
        rows.join("\n")
    }

    /// Machine-readable dump, one gate per line: `layer kind q0 [q1 [q2]]`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for g in &layer.gates {
                let _ = writeln!(out, "{i} {g}");
            }
        }
        out
    }
}

/// Greedy as-soon-as-possible layering: each gate lands one layer after the
/// last layer touching any of its qubits. Gate order per qubit is preserved.
pub fn schedule_layers(num_data: usize, num_ancilla: usize, gates: &[Gate]) -> Result<Circuit> {
    let labeled: Vec<(Gate, Option<LayerLabel>)> = gates.iter().map(|&g| (g, None)).collect();
    schedule_labeled(num_data, num_ancilla, &labeled)
}

/// As [`schedule_layers`]; a layer takes the label of the first gate placed in it.
pub fn schedule_labeled(
    num_data: usize,
    num_ancilla: usize,
    gates: &[(Gate, Option<LayerLabel>)],
) -> Result<Circuit> {
    let m = num_data + num_ancilla;
    let mut next_free = vec![0usize; m];
    let mut layers: Vec<Layer> = Vec::new();
    for &(g, label) in gates {
        g.validate(m)?;
        let at = g.qubits().iter().map(|&q| next_free[q]).max().unwrap_or(0);
        if at == layers.len() {
            layers.push(Layer { gates: Vec::new(), label });
        }
        layers[at].gates.push(g);
        for &q in g.qubits() {
            next_free[q] = at + 1;
        }
    }
    Ok(Circuit {
        num_data,
        num_ancilla,
        layers,
    })
}

/// Number of ancillas the Grover network needs for `n` data qubits.
pub fn grover_ancillas(n: usize) -> usize {
    n.saturating_sub(3)
}

/// One layer of Hadamards on `n` data qubits.
pub fn build_uniform_superposition(n: usize) -> Result<Circuit> {
    if n == 0 {
        return domain("need at least one qubit");
    }
    Circuit::from_layers(
        n,
        0,
        vec![Layer {
            gates: (0..n).map(Gate::h).collect(),
            label: Some(LayerLabel::Superposition),
        }],
    )
}

/// Toffoli cascade for a NOT on `target` controlled by every qubit in
/// `controls`. For `k` controls it computes the AND chain into `k - 2`
/// ancillas, flips the target, and uncomputes the chain: `2k - 3` Toffolis,
/// with every ancilla returned to its input value.
pub fn decompose_cnx(controls: &[usize], target: usize, ancillas: &[usize]) -> Result<Vec<Gate>> {
    let k = controls.len();
    if k < 2 {
        return domain(format!("decompose_cnx needs at least 2 controls, got {k}"));
    }
    let need = k - 2;
    if ancillas.len() < need {
        return domain(format!("{k} controls need {need} ancillas, got {}", ancillas.len()));
    }
    let anc = &ancillas[..need];
    let mut all: Vec<usize> = controls.iter().chain(anc).copied().collect();
    all.push(target);
    for (i, q) in all.iter().enumerate() {
        if all[..i].contains(q) {
            return domain(format!("qubit {q} used twice in C^{k}(X)"));
        }
    }
    if k == 2 {
        return Ok(vec![Gate::toffoli(controls[0], controls[1], target)]);
    }
    let mut chain = Vec::with_capacity(need);
    chain.push(Gate::toffoli(controls[0], controls[1], anc[0]));
    for i in 1..need {
        chain.push(Gate::toffoli(controls[i + 1], anc[i - 1], anc[i]));
    }
    let mut gates = chain.clone();
    gates.push(Gate::toffoli(controls[k - 1], anc[need - 1], target));
    gates.extend(chain.into_iter().rev());
    Ok(gates)
}

/// Phase flip of `|0…0⟩` on the data register: X-conjugated controlled-Z,
/// with the controlled-Z written as H·C^{n-1}(X)·H on the last data qubit.
fn zero_reflection(n: usize) -> Result<Vec<Gate>> {
    let target = n - 1;
    let mut gates: Vec<Gate> = (0..n).map(Gate::x).collect();
    gates.push(Gate::h(target));
    if n == 2 {
        gates.push(Gate::cnot(0, 1));
    } else {
        let controls: Vec<usize> = (0..n - 1).collect();
        let ancillas: Vec<usize> = (n..n + grover_ancillas(n)).collect();
        gates.extend(decompose_cnx(&controls, target, &ancillas)?);
    }
    gates.push(Gate::h(target));
    gates.extend((0..n).map(Gate::x));
    Ok(gates)
}

/// One Grover iteration for the searched state `|0…0⟩`: the oracle followed
/// by the inversion about the mean, equal to the abstract iteration up to a
/// global sign.
pub fn build_grover_gate(n: usize) -> Result<Circuit> {
    if n < 2 {
        return domain(format!("the Grover network needs n >= 2, got {n}"));
    }
    let mut gates: Vec<(Gate, Option<LayerLabel>)> = zero_reflection(n)?
        .into_iter()
        .map(|g| (g, Some(LayerLabel::Oracle)))
        .collect();
    let inv = Some(LayerLabel::Inversion);
    gates.extend((0..n).map(|q| (Gate::h(q), inv)));
    gates.extend(zero_reflection(n)?.into_iter().map(|g| (g, inv)));
    gates.extend((0..n).map(|q| (Gate::h(q), inv)));
    schedule_labeled(n, grover_ancillas(n), &gates)
}

/// Gate and resource tallies for a circuit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCounts {
    pub toffoli: usize,
    pub hadamard: usize,
    pub x: usize,
    pub z: usize,
    pub cnot: usize,
    pub time_steps: usize,
    pub ancillas: usize,
}

impl ResourceCounts {
    pub fn of(circuit: &Circuit) -> ResourceCounts {
        let mut c = ResourceCounts {
            time_steps: circuit.depth(),
            ancillas: circuit.num_ancilla(),
            ..Default::default()
        };
        for g in circuit.gates() {
            match g.kind() {
                GateKind::Toffoli => c.toffoli += 1,
                GateKind::H => c.hadamard += 1,
                GateKind::X => c.x += 1,
                GateKind::Z => c.z += 1,
                GateKind::Cnot => c.cnot += 1,
                GateKind::Y => {}
            }
        }
        c
    }

    /// Closed-form counts quoted for the reference network of one Grover
    /// iteration: `2(n-2)` Toffolis, `3n` Hadamards, `2(2n-1)` X, 2 Z,
    /// `2n+6` time steps and `n-3` ancillas. CNOTs appear only at `n = 2`.
    pub fn reference(n: usize) -> ResourceCounts {
        ResourceCounts {
            toffoli: if n > 2 { 2 * (n - 2) } else { 0 },
            hadamard: 3 * n,
            x: 2 * (2 * n).saturating_sub(1),
            z: 2,
            cnot: if n == 2 { 2 } else { 0 },
            time_steps: 2 * n + 6,
            ancillas: grover_ancillas(n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub n: usize,
    pub actual: ResourceCounts,
    pub reference: ResourceCounts,
}

pub fn resource_counts(circuit: &Circuit, n: usize) -> ResourceReport {
    ResourceReport {
        n,
        actual: ResourceCounts::of(circuit),
        reference: ResourceCounts::reference(n),
    }
}
