//! Finite-dimensional simulation of branch-selection dynamics on a closed
//! bipartite quantum system `H_A ⊗ H_B`.
//!
//! The pipeline is:
//!
//! 1. [`models`] builds an initial state and a piecewise-constant
//!    [`dynamics::HamiltonianSchedule`].
//! 2. [`decomposition`] supplies a complete family of orthogonal projectors
//!    on `H_B` (fixed basis, discrete Fourier, or state-dependent Schmidt).
//! 3. [`branching`] extracts final-time branches, their probabilities, the
//!    two-time weights and the real state of each branch on `H_A`.
//! 4. [`asymptotics`] sweeps the final horizon and reports whether branch
//!    probabilities and real states settle.
//!
//! Units are chosen with ℏ = 1. Amplitudes use a row-major A-then-B
//! flat index: `|a⟩⊗|b⟩ ↔ a·d_B + b`.

// Comparisons are written as `!(x >= lo)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod branching;
pub mod decomposition;
pub mod dynamics;
mod error;
pub mod exec;
pub mod linalg;
pub mod models;
mod tolerances;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use linalg::{BipartiteSpace, DensityMatrix, OperatorB, StateVector, C64};
pub use tolerances::Tolerances;
