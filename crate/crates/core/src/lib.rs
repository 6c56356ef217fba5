//! Spectral analysis, boundary observability and exact null-control synthesis for the
//! linear biharmonic Schrödinger equation
//!
//! ```text
//! i ρ(x) ∂ₜy = −∂ₓ²(σ(x) ∂ₓ²y) + ∂ₓ(q(x) ∂ₓy),   x ∈ (0, ℓ)
//! y(t,0) = ∂ₓy(t,0) = y(t,ℓ) = 0,   ∂ₓy(t,ℓ) = f(t)
//! ```
//!
//! The pipeline is:
//!
//! * [`coeffs`]: admissible coefficient profiles and the optical geometry γ, ζ, X.
//! * [`operator`]: Hermite-cubic discretization of the clamped fourth-order operator.
//! * [`eigen`]: the generalized eigenproblem `Kφ = λMφ` and boundary traces `φ″(ℓ)`.
//! * [`asymptotics`]: characteristic roots and the spacing, gap and trace laws.
//! * [`dynamics`]: modal states, Sobolev-scale norms, free and controlled evolution.
//! * [`observability`]: Gram matrices of exponentials, observability constants,
//!   Beurling densities.
//! * [`control`]: moment-method and HUM null controls with forward verification.
//! * [`cli`]: configuration grammar, experiment runner and report files.

// `!(x > 0.0)` is used deliberately so NaN inputs are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod band;
pub mod cli;
pub mod coeffs;
pub mod control;
pub mod dynamics;
pub mod eigen;
mod error;
pub mod observability;
pub mod operator;
pub mod quadrature;

pub use error::{Error, ErrorClass, Result};

pub use num_complex::Complex64;
