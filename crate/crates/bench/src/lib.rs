//! Shared fixtures for the criterion benchmarks.

use noisy_grover::mc::GroverNetwork;
use noisy_grover::{Result, StateVector};

/// Grover network for `n` data qubits and the uniform superposition it acts on.
pub fn grover_fixture(n: usize) -> Result<(GroverNetwork, StateVector)> {
    let net = GroverNetwork::new(n)?;
    let mut s = StateVector::zero(net.num_qubits())?;
    net.superposition.apply(&mut s)?;
    Ok((net, s))
}

/// A state with every amplitude populated, for kernel timings.
pub fn spread_state(num_qubits: usize) -> Result<StateVector> {
    let mut s = StateVector::zero(num_qubits)?;
    for q in 0..num_qubits {
        s.apply_gate(&noisy_grover::Gate::h(q))?;
    }
    Ok(s)
}
