//! Simulator for the bilinear 1-D Schrödinger equation
//! `i ∂_t ψ = (-Δ + V) ψ + u Q_1 ψ + u² Q_2 ψ` on `[0, 1]` with Dirichlet
//! conditions, stabilized toward the ground state by Lyapunov feedback on
//! the averaged system and the explicit oscillating control
//! `u = α + β sin(t/ε)`.
//!
//! Modules, bottom-up:
//! - [`spectral`]: quadrature and the truncated eigenbasis of `-Δ + V`.
//! - [`operators`]: moment matrices, Lyapunov function, feedback laws.
//! - [`metrics`]: Sobolev-weighted norms and distances.
//! - [`dynamics`]: Euler and Strang integrators run in lockstep.
//! - [`hypotheses`]: coupling and non-resonance checks at truncation level.
//! - [`harness`]: configs, presets, trajectory files, sweeps.

// Positivity checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod hypotheses;
pub mod linalg;
pub mod metrics;
pub mod operators;
pub mod spectral;

pub use error::{Error, Result};
