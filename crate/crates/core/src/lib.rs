//! Core library for simulating monitored three-level superconducting atoms:
//! dense complex linear algebra on small tensor-product Hilbert spaces,
//! physical model builders, closed-form no-click jump dynamics, the
//! flying-spin toy model of diffusive monitoring, and energy-participation
//! Hamiltonian quantization.
//!
//! Angular frequencies are in rad/us and times in us throughout. Input
//! layers that accept ordinary frequencies in MHz convert by 2*pi.

pub mod analytic;
pub mod epr;
mod error;
pub mod linalg;
pub mod models;
pub mod tol;
pub mod toy;

pub use error::CoreError;
pub use linalg::{
    expect_ket, expect_rho, innovation_superop, jump_superop, lindblad_dissipator, normalize,
    superop, tensor, DensityMatrix, HilbertSpace, LinearOperator, StateVector, SuperopKind,
};
pub use tol::Tolerances;

/// Complex scalar used everywhere.
pub type C64 = num_complex::Complex64;

/// 2*pi, for MHz <-> rad/us conversions.
pub const TWO_PI: f64 = std::f64::consts::TAU;
