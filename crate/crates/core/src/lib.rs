//! Threshold theory of the spiked k-tensor model `Y = λ√N X⊗k + W`.
//!
//! The crate is split along the lines of the computation:
//!
//! - [`tensor`]: dense k-tensors, the spiked observation, Hamiltonians and
//!   their Riemannian gradients on the sphere.
//! - [`scalar`]: the scalar functions `f_λ`, `φ_λ`, `h`, the thresholds
//!   `λ_s` and `λ_c`, the fixed point `q_s(λ)` and the asymptotic limits of
//!   the maximum likelihood, the correlation and the MMSE.
//! - [`landscape`]: the constrained likelihood `E_λ(m)` and the ground-state
//!   variational problem `G(ξ, h) = ½ min P_h(φ)`.
//! - [`replica`]: the two-replica functional `P(u, m, Λ)` and its local
//!   structure around the origin.
//! - [`montecarlo`]: finite-N maximum likelihood, free energy, Gibbs
//!   overlaps and detection experiments.
//! - [`table`]: the CSV table every experiment emits.

pub mod error;
pub mod landscape;
pub mod montecarlo;
pub mod numerics;
pub mod replica;
pub mod rng;
pub mod scalar;
pub mod table;
pub mod tensor;

pub use error::{Error, Result};
pub use table::{Cell, Column, ColumnType, CurveTable, Metadata};
pub use tensor::{ModelParams, Observation, SphereVector, SymmetricTensor};

/// Crate version, stamped into table metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
