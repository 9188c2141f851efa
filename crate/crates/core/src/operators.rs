//! Control matrices in the eigenbasis, the Lyapunov function and the
//! damping feedback laws built from it.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cnorm, Matrix};
use crate::spectral::{sine_moment_matrix, GridFunction, SineBasisSpec, SpectralBasis};

/// Tolerance on `‖X‖ = 1` accepted by [`ModeState::new`].
pub const SPHERE_TOL: f64 = 1e-9;

/// Truncated wave function: coefficients on the retained eigenmodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState(Vec<Complex64>);

impl ModeState {
    /// Wraps `coeffs`, which must already lie on the unit sphere.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        let norm = cnorm(&coeffs);
        if coeffs.is_empty() || (norm - 1.0).abs() > SPHERE_TOL {
            return Err(Error::Config(format!(
                "mode state must have unit norm, got {norm}"
            )));
        }
        Ok(Self(coeffs))
    }

    /// Rescales `coeffs` onto the unit sphere.
    pub fn normalized(coeffs: Vec<Complex64>) -> Result<Self> {
        let norm = cnorm(&coeffs);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Config("cannot normalize a zero or non-finite state".into()));
        }
        Ok(Self(coeffs.into_iter().map(|z| z / norm).collect()))
    }

    /// Eigenmode `k` (zero-based) of an `m`-mode truncation.
    pub fn basis(m: usize, k: usize) -> Self {
        let mut v = vec![Complex64::new(0.0, 0.0); m];
        v[k] = Complex64::new(1.0, 0.0);
        Self(v)
    }

    pub fn ground(m: usize) -> Self {
        Self::basis(m, 0)
    }

    pub(crate) fn from_raw(coeffs: Vec<Complex64>) -> Self {
        Self(coeffs)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.0
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        cnorm(&self.0)
    }

    /// Multiplies by the global phase `e^{iθ}`.
    pub fn rotated(&self, theta: f64) -> Self {
        let c = Complex64::from_polar(1.0, theta);
        Self(self.0.iter().map(|z| z * c).collect())
    }
}

/// `H0 = diag(λ)` plus the dipolar and polarizability moment matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOperators {
    pub h0: Vec<f64>,
    pub h1: Matrix,
    pub h2: Matrix,
}

impl ControlOperators {
    /// Moment matrices `H_n[i][j] = ∫ Q_n φ_i φ_j` for the retained modes.
    pub fn build(basis: &SpectralBasis, q1: &GridFunction, q2: &GridFunction) -> Result<Self> {
        let spec = SineBasisSpec::new(basis.sine_modes())?;
        let project = |q: &GridFunction| -> Result<Matrix> {
            let s = sine_moment_matrix(q, spec)?;
            Ok(s.congruence(basis.eigenvectors()))
        };
        Ok(Self {
            h0: basis.eigenvalues().to_vec(),
            h1: project(q1)?,
            h2: project(q2)?,
        })
    }

    pub fn modes(&self) -> usize {
        self.h0.len()
    }

    pub fn moment(&self, j: Coupling) -> &Matrix {
        match j {
            Coupling::Dipolar => &self.h1,
            Coupling::Polarizability => &self.h2,
        }
    }
}

/// Selects `Q_1` (dipolar) or `Q_2` (polarizability).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Dipolar,
    Polarizability,
}

/// Damping function `g` applied to `I_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Damping {
    /// `g(y) = -min(y, 0)`
    #[default]
    Clip,
    /// `g(y) = y² / (1 + y²)` for `y < 0`, zero otherwise (C¹).
    Smooth,
}

impl Damping {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Damping::Clip => {
                if y < 0.0 {
                    -y
                } else {
                    0.0
                }
            }
            Damping::Smooth => {
                if y < 0.0 {
                    y * y / (1.0 + y * y)
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Damping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Damping::Clip => "clip",
            Damping::Smooth => "smooth",
        })
    }
}

impl FromStr for Damping {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "clip" => Ok(Damping::Clip),
            "smooth" => Ok(Damping::Smooth),
            other => Err(Error::Config(format!("unknown g_kind {other:?}"))),
        }
    }
}

/// Gain `k`, Lyapunov weight `γ` and damping selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackParams {
    pub k: f64,
    pub gamma: f64,
    pub damping: Damping,
}

impl FeedbackParams {
    pub fn new(k: f64, gamma: f64, damping: Damping) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("gain k must be positive, got {k}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { k, gamma, damping })
    }
}

/// `γ` such that `L(x0) = target`.
pub fn gamma_for_target(x0: &ModeState, ops: &ControlOperators, target: f64) -> Result<f64> {
    let x = x0.coeffs();
    let (excited, population) = x
        .iter()
        .zip(&ops.h0)
        .skip(1)
        .fold((0.0, 0.0), |(e, p), (z, l)| (e + l * l * z.norm_sqr(), p + z.norm_sqr()));
    if excited == 0.0 {
        return Err(Error::Config(
            "cannot fit gamma: initial state has no excited-mode population".into(),
        ));
    }
    let gamma = (target - population) / excited;
    if gamma <= 0.0 {
        return Err(Error::Config(format!(
            "Lyapunov target {target} is unreachable from this initial state (gamma = {gamma})"
        )));
    }
    Ok(gamma)
}

/// `L(X) = γ Σ_{k≥2} λ_k² |x_k|² + 1 - |x_1|²`.
///
/// On the unit sphere `1 - |x_1|² = Σ_{k≥2} |x_k|²`; the sum is used because
/// it does not cancel near the target.
pub fn lyapunov(x: &ModeState, ops: &ControlOperators, p: &FeedbackParams) -> f64 {
    x.coeffs()
        .iter()
        .zip(&ops.h0)
        .skip(1)
        .map(|(z, l)| (p.gamma * l * l + 1.0) * z.norm_sqr())
        .sum()
}

/// `I_j(X) = Im(γ Σ_{k≥2} λ_k² (H_j X)_k conj(x_k) - (H_j X)_1 conj(x_1))`.
pub fn feedback_i(j: Coupling, x: &ModeState, ops: &ControlOperators, p: &FeedbackParams) -> f64 {
    let c = x.coeffs();
    let hx = ops.moment(j).mul_cvec(c);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..c.len() {
        let l = ops.h0[k];
        acc += hx[k] * c[k].conj() * (l * l);
    }
    (acc * p.gamma - hx[0] * c[0].conj()).im
}

/// Feedback values at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub i1: f64,
    pub i2: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Feedback {
    /// Coefficient of `H2` in the averaged generator, `α² + β²/2`.
    pub fn polarizability_coeff(&self) -> f64 {
        self.alpha * self.alpha + 0.5 * self.beta * self.beta
    }
}

pub fn feedback(x: &ModeState, ops: &ControlOperators, p: &FeedbackParams) -> Feedback {
    let i1 = feedback_i(Coupling::Dipolar, x, ops, p);
    let i2 = feedback_i(Coupling::Polarizability, x, ops, p);
    Feedback {
        i1,
        i2,
        alpha: -p.k * i1,
        beta: p.damping.apply(i2),
    }
}

/// `α(X) = -k I_1(X)`.
pub fn feedback_alpha(x: &ModeState, ops: &ControlOperators, p: &FeedbackParams) -> f64 {
    -p.k * feedback_i(Coupling::Dipolar, x, ops, p)
}

/// `β(X) = g(I_2(X))`.
pub fn feedback_beta(x: &ModeState, ops: &ControlOperators, p: &FeedbackParams) -> f64 {
    p.damping.apply(feedback_i(Coupling::Polarizability, x, ops, p))
}

/// Closed-form `dL/dt = -2(k I_1² (1 - k I_2) - ½ I_2 g(I_2)²)` along the averaged flow.
pub fn lyapunov_rate(fb: &Feedback, p: &FeedbackParams) -> f64 {
    -2.0 * (p.k * fb.i1 * fb.i1 * (1.0 - p.k * fb.i2) - 0.5 * fb.i2 * fb.beta * fb.beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn validation_ops(m: usize) -> ControlOperators {
        let basis = SpectralBasis::build(&GridFunction::HarmonicCentered, 50, m).unwrap();
        ControlOperators::build(&basis, &GridFunction::X2, &GridFunction::X).unwrap()
    }

    fn params(gamma: f64) -> FeedbackParams {
        FeedbackParams::new(0.05, gamma, Damping::Clip).unwrap()
    }

    #[test]
    fn unit_moment_gives_identity() {
        let basis = SpectralBasis::build(&GridFunction::HarmonicCentered, 30, 5).unwrap();
        let ops = ControlOperators::build(&basis, &GridFunction::constant(1.0), &GridFunction::constant(1.0))
            .unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ops.h1[(i, j)] - expect).abs() < 1e-12);
                assert!((ops.h2[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn free_moments_match_symbolic_integrals() {
        let basis = SpectralBasis::build(&GridFunction::Zero, 20, 4).unwrap();
        let ops = ControlOperators::build(&basis, &GridFunction::X2, &GridFunction::X).unwrap();
        for k in 1..=4 {
            let kf = k as f64;
            let exact = 1.0 / 3.0 - 1.0 / (2.0 * kf * kf * PI * PI);
            assert!((ops.h1[(k - 1, k - 1)] - exact).abs() < 1e-12);
        }
        let exact = -16.0 / (9.0 * PI * PI);
        assert!((ops.h2[(0, 1)] - exact).abs() < 1e-12);
        assert!((exact + 0.180126).abs() < 1e-6);
        assert!(ops.h1.is_symmetric(1e-12) && ops.h2.is_symmetric(1e-12));
        assert!(ops.h0.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn lyapunov_examples() {
        let ops = validation_ops(5);
        let p = params(1e-3);
        assert_eq!(lyapunov(&ModeState::ground(5), &ops, &p), 0.0);
        for theta in [0.3, 1.0, -2.5] {
            let l = lyapunov(&ModeState::ground(5).rotated(theta), &ops, &p);
            assert!(l.abs() < 1e-15);
        }
        let mut v = vec![c(0.0, 0.0); 5];
        v[0] = c(FRAC_1_SQRT_2, 0.0);
        v[1] = c(0.0, FRAC_1_SQRT_2);
        let x0 = ModeState::new(v).unwrap();
        let l2 = ops.h0[1];
        let p = params(1.0 / (2.0 * l2 * l2));
        assert!((lyapunov(&x0, &ops, &p) - 0.75).abs() < 1e-12);
        let gamma = gamma_for_target(&x0, &ops, 0.75).unwrap();
        assert!((gamma - p.gamma).abs() < 1e-15 * p.gamma.max(1.0));
        assert!(gamma_for_target(&ModeState::ground(5), &ops, 0.75).is_err());
    }

    #[test]
    fn ground_and_real_states_have_no_feedback() {
        let ops = validation_ops(5);
        let p = params(1e-3);
        let fb = feedback(&ModeState::ground(5), &ops, &p);
        assert_eq!((fb.i1, fb.i2, fb.alpha, fb.beta), (0.0, 0.0, 0.0, 0.0));
        let real = ModeState::normalized(vec![c(0.3, 0.0), c(-0.5, 0.0), c(0.2, 0.0), c(0.1, 0.0), c(0.7, 0.0)])
            .unwrap();
        let fb = feedback(&real, &ops, &p);
        assert_eq!(fb.i1, 0.0);
        assert_eq!(fb.i2, 0.0);
    }

    #[test]
    fn damping_functions() {
        for g in [Damping::Clip, Damping::Smooth] {
            assert_eq!(g.apply(0.0), 0.0);
            assert_eq!(g.apply(2.0), 0.0);
            assert!(g.apply(-0.5) > 0.0);
        }
        assert_eq!(Damping::Clip.apply(-0.5), 0.5);
        assert!((Damping::Smooth.apply(-0.5) - 0.2).abs() < 1e-15);
        assert_eq!("smooth".parse::<Damping>().unwrap(), Damping::Smooth);
        assert!("tanh".parse::<Damping>().is_err());
    }

    /// `dL/ds` along `exp(-is H_1)` equals `2 I_1` at s = 0: the
    /// infinitesimal version of the averaged flow with α = 1, β = 0.
    #[test]
    fn i1_matches_finite_difference_of_lyapunov() {
        let ops = validation_ops(5);
        let mut v = vec![c(0.0, 0.0); 5];
        v[0] = c(FRAC_1_SQRT_2, 0.0);
        v[1] = c(0.0, FRAC_1_SQRT_2);
        let x0 = ModeState::new(v).unwrap();
        let gamma = gamma_for_target(&x0, &ops, 0.75).unwrap();
        let p = params(gamma);
        let eig = crate::linalg::symmetric_eigen(&ops.h1).unwrap();
        let flow = |s: f64| {
            let mut y = x0.coeffs().to_vec();
            crate::linalg::apply_unitary_exp(&eig, s, &mut y);
            lyapunov(&ModeState::from_raw(y), &ops, &p)
        };
        let h = 1e-5;
        let fd = (flow(h) - flow(-h)) / (2.0 * h);
        let i1 = feedback_i(Coupling::Dipolar, &x0, &ops, &p);
        assert!(i1.abs() > 1e-3);
        assert!((fd - 2.0 * i1).abs() < 1e-8 * i1.abs().max(1.0), "fd {fd} vs 2 I1 {}", 2.0 * i1);
    }

    #[test]
    fn rejects_bad_params_and_states() {
        assert!(FeedbackParams::new(0.0, 1.0, Damping::Clip).is_err());
        assert!(FeedbackParams::new(1.0, -1.0, Damping::Clip).is_err());
        assert!(ModeState::new(vec![c(1.0, 1.0)]).is_err());
        assert!(ModeState::normalized(vec![c(0.0, 0.0)]).is_err());
    }
}
