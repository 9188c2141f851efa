//! Sobolev-type norms on mode vectors and the phase-invariant distance to
//! the ground-state orbit.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::ModeState;

/// Per-mode weights `w_k = λ_k^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolevWeight {
    pub s: f64,
    weights: Vec<f64>,
}

impl SobolevWeight {
    pub fn new(eigenvalues: &[f64], s: f64) -> Result<Self> {
        if let Some(bad) = eigenvalues.iter().find(|&&l| l <= 0.0) {
            return Err(Error::Config(format!(
                "Sobolev weights need positive eigenvalues, found {bad}"
            )));
        }
        Ok(Self {
            s,
            weights: eigenvalues.iter().map(|l| l.powf(s)).collect(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `sqrt(Σ w_k |x_k|²)`.
pub fn hs_norm(x: &[Complex64], w: &SobolevWeight) -> f64 {
    assert_eq!(x.len(), w.weights.len(), "state and weight lengths differ");
    x.iter()
        .zip(&w.weights)
        .map(|(z, wk)| wk * z.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `min_{|c|=1} ‖X - c e_1‖` in the weighted norm.
///
/// The minimizer is `c = x_1/|x_1|`, leaving `Σ_{k≥2} w_k|x_k|² + w_1(|x_1| - 1)²`.
pub fn dist_to_target(x: &ModeState, w: &SobolevWeight) -> f64 {
    let c = x.coeffs();
    assert_eq!(c.len(), w.weights.len(), "state and weight lengths differ");
    let head = c[0].norm() - 1.0;
    let tail: f64 = c
        .iter()
        .zip(&w.weights)
        .skip(1)
        .map(|(z, wk)| wk * z.norm_sqr())
        .sum();
    (w.weights[0] * head * head + tail).sqrt()
}

/// Raw H² distance `‖Xa - Xb‖` with weights `λ_k²`, no phase alignment.
pub fn h2_gap(a: &ModeState, b: &ModeState, h2: &SobolevWeight) -> f64 {
    let diff: Vec<Complex64> = a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| x - y)
        .collect();
    hs_norm(&diff, h2)
}
