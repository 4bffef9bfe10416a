//! Qubit-recycling toolkit for convolutional (staircase) quantum circuits.
//!
//! A convolutional circuit applies a sliding two-qubit gate down a line of
//! qubits. Once the active window has moved past a qubit, that qubit can be
//! *rewound*: applying the adjoints of the gates that no longer act on the
//! active region returns it to a state exponentially close to `|0⟩`, making it
//! reusable without measurement or hardware reset. This crate provides:
//!
//! * [`circuits`] — circuit values, staircase/rewinding builders, JSON I/O;
//! * [`channels`] — superoperators, Kraus/Choi forms, CPTP validation,
//!   depolarizing noise;
//! * [`transfer`] — the transfer operator on channel space that governs how
//!   fast rewound qubits converge to `|0⟩`, its spectrum, contraction
//!   estimates, and noisy perturbations;
//! * [`simulator`] — exact back-ends (statevector, density matrix with noise,
//!   matrix product state) used both as oracles and as the large-`n` engine;
//! * [`experiments`] — Haar-random sweeps producing per-qubit fidelity
//!   profiles, exponential-decay fits, and steps-to-target-error extraction;
//! * [`planner`] — recycling schedules that trade circuit length against a
//!   target state-preparation error budget;
//! * [`mps`] — a compiler from boundary matrix product states to staircase
//!   circuits via isometry completion.
//!
//! The numerical conventions shared by every module: qubit 0 is the most
//! significant bit of a computational-basis index, matrices vectorize by
//! column stacking (`vec(ρ)[i + d·j] = ρ[i][j]`), and a superoperator acts as
//! a `d² × d²` matrix on vectorized density matrices.

pub mod channels;
pub mod circuits;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mps;
pub mod planner;
pub mod rng;
pub mod simulator;
pub mod transfer;

pub use error::{Error, Result};
