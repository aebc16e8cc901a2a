//! Grover search under an independent stochastic depolarizing error model.
//!
//! The crate builds the explicit gate network of the Grover iteration for the
//! searched state `|0…0⟩`, runs Monte Carlo noise trajectories on a dense state
//! vector, and extracts the damping, first-maximum and allowed-error laws from
//! the resulting success curves. The [`steane`] module adds the fault-tolerant
//! `[[7,1,3]]`-encoded two-qubit variant.
//!
//! Qubit 0 is the least significant bit of a basis index throughout. Ancillas
//! sit directly above the data register.

pub mod analysis;
pub mod circuit;
pub mod error;
pub mod exact;
pub mod mc;
pub mod noise;
pub mod output;
pub mod qstate;
pub mod steane;

mod par;

pub use analysis::{DampingFit, LambdaModel, ThresholdFit};
pub use circuit::{Circuit, Gate, GateKind, LayerLabel, ResourceCounts};
pub use error::{Error, Result};
pub use mc::{McRun, SuccessCurve, WeightHistogram};
pub use noise::{MemoryMode, NoiseParams, RandomStream};
pub use qstate::{Pauli, PauliWord, StateVector};

/// Name of the pseudo-random generator recorded in every result file.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.3); seed_from_u64(master_seed), stream = trajectory index";

/// Crate version recorded in every result file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
