//! Lockstep integration of the oscillating closed loop and the averaged
//! closed loop on the truncated mode space.
//!
//! The oscillating system is driven by the explicit control
//! `u(t) = α(X_av(t)) + β(X_av(t)) sin(t/ε)`; the feedback values always come
//! from the averaged state, never from `X_ε`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{apply_unitary_exp, cnorm, symmetric_eigen, SymmetricEigen};
use crate::metrics::{dist_to_target, h2_gap, SobolevWeight};
use crate::operators::{feedback, lyapunov, ControlOperators, Feedback, FeedbackParams, ModeState};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Exponential Euler: exact free flow, explicit Euler on the control term.
    Euler,
    /// Plain explicit Euler on the full generator.
    EulerExplicit,
    #[default]
    Strang,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Euler => "euler",
            Method::EulerExplicit => "euler-explicit",
            Method::Strang => "strang",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "euler" => Ok(Method::Euler),
            "euler-explicit" => Ok(Method::EulerExplicit),
            "strang" => Ok(Method::Strang),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Where the feedback values are sampled inside a Strang step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackSampling {
    /// Frozen at the step's initial averaged state (first order in the feedback).
    Initial,
    /// Evaluated on a predicted half-step averaged state (second order).
    #[default]
    Midpoint,
}

impl fmt::Display for FeedbackSampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackSampling::Initial => "initial",
            FeedbackSampling::Midpoint => "midpoint",
        })
    }
}

impl FromStr for FeedbackSampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "initial" => Ok(FeedbackSampling::Initial),
            "midpoint" => Ok(FeedbackSampling::Midpoint),
            other => Err(Error::Config(format!("unknown feedback_sampling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    pub method: Method,
    pub dt: f64,
    /// Oscillation period scale; `0` runs the averaged system alone.
    pub epsilon: f64,
    pub sampling: FeedbackSampling,
}

impl IntegratorSpec {
    pub fn new(method: Method, dt: f64, epsilon: f64) -> Result<Self> {
        let spec = Self {
            method,
            dt,
            epsilon,
            sampling: FeedbackSampling::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_sampling(mut self, sampling: FeedbackSampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        // Relative slack so that dt = epsilon survives decimal round-off.
        if self.epsilon > 0.0 && self.dt > self.epsilon * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt = {} exceeds epsilon = {}; the oscillating system is not resolved",
                self.dt, self.epsilon
            )));
        }
        Ok(())
    }

    pub fn oscillating(&self) -> bool {
        self.epsilon > 0.0
    }
}

/// `-i (H0 + α H1 + (α² + β²/2) H2) X` with the feedback evaluated at `X`.
pub fn averaged_rhs(x: &ModeState, ops: &ControlOperators, p: &FeedbackParams) -> Vec<Complex64> {
    let fb = feedback(x, ops, p);
    generator_rhs(x.coeffs(), ops, fb.alpha, fb.polarizability_coeff())
}

/// `-i (H0 + u H1 + u² H2) X`.
pub fn oscillating_rhs(x: &ModeState, u: f64, ops: &ControlOperators) -> Vec<Complex64> {
    generator_rhs(x.coeffs(), ops, u, u * u)
}

fn generator_rhs(x: &[Complex64], ops: &ControlOperators, c1: f64, c2: f64) -> Vec<Complex64> {
    let h1x = ops.h1.mul_cvec(x);
    let h2x = ops.h2.mul_cvec(x);
    x.iter()
        .zip(&ops.h0)
        .zip(h1x.iter().zip(&h2x))
        .map(|((z, l), (a, b))| -I * (z * l + a * c1 + b * c2))
        .collect()
}

/// `u(t) = α(X_av) + β(X_av) sin(t/ε)`.
pub fn control_value(
    t: f64,
    x_av: &ModeState,
    epsilon: f64,
    ops: &ControlOperators,
    p: &FeedbackParams,
) -> f64 {
    let fb = feedback(x_av, ops, p);
    oscillating_control(&fb, t, epsilon)
}

fn oscillating_control(fb: &Feedback, t: f64, epsilon: f64) -> f64 {
    if epsilon > 0.0 {
        fb.alpha + fb.beta * (t / epsilon).sin()
    } else {
        fb.alpha
    }
}

/// Time plus the two states advanced together.
#[derive(Debug, Clone, PartialEq)]
pub struct LockstepState {
    pub t: f64,
    pub step: u64,
    pub x_eps: ModeState,
    pub x_av: ModeState,
}

impl LockstepState {
    pub fn new(x0: ModeState) -> Self {
        Self {
            t: 0.0,
            step: 0,
            x_eps: x0.clone(),
            x_av: x0,
        }
    }
}

/// Per-step side information.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    /// `‖X‖ - 1` before renormalization (Euler) or after the step (Strang).
    pub drift_eps: f64,
    pub drift_av: f64,
}

/// Cached eigen-decomposition of `a H1 + b H2`.
struct ControlExp {
    key: Option<(f64, f64)>,
    eig: Option<SymmetricEigen>,
}

const EXP_CACHE_TOL: f64 = 1e-14;

impl ControlExp {
    fn new() -> Self {
        Self { key: None, eig: None }
    }

    fn prepare(&mut self, ops: &ControlOperators, a: f64, b: f64) -> Result<Option<&SymmetricEigen>> {
        if a == 0.0 && b == 0.0 {
            return Ok(None);
        }
        let reuse = matches!(self.key, Some((ka, kb)) if (ka - a).abs() <= EXP_CACHE_TOL && (kb - b).abs() <= EXP_CACHE_TOL);
        if !reuse {
            let m = ops.h1.combine(a, &ops.h2, b);
            self.eig = Some(symmetric_eigen(&m)?);
            self.key = Some((a, b));
        }
        Ok(self.eig.as_ref())
    }

    fn apply(&mut self, ops: &ControlOperators, a: f64, b: f64, tau: f64, x: &mut [Complex64]) -> Result<()> {
        if let Some(eig) = self.prepare(ops, a, b)? {
            apply_unitary_exp(eig, tau, x);
        }
        Ok(())
    }
}

/// Advances a [`LockstepState`] with fixed operators, gains and step size.
pub struct Integrator<'a> {
    ops: &'a ControlOperators,
    params: FeedbackParams,
    spec: IntegratorSpec,
    half_phase: Vec<Complex64>,
    full_phase: Vec<Complex64>,
    exp_av: ControlExp,
    exp_eps: ControlExp,
}

impl<'a> Integrator<'a> {
    pub fn new(ops: &'a ControlOperators, params: FeedbackParams, spec: IntegratorSpec) -> Result<Self> {
        spec.validate()?;
        let phase = |tau: f64| -> Vec<Complex64> {
            ops.h0.iter().map(|l| Complex64::from_polar(1.0, -l * tau)).collect()
        };
        Ok(Self {
            ops,
            params,
            spec,
            half_phase: phase(0.5 * spec.dt),
            full_phase: phase(spec.dt),
            exp_av: ControlExp::new(),
            exp_eps: ControlExp::new(),
        })
    }

    pub fn spec(&self) -> &IntegratorSpec {
        &self.spec
    }

    pub fn step(&mut self, s: &mut LockstepState) -> Result<StepInfo> {
        let info = match self.spec.method {
            Method::Strang => self.step_strang(s)?,
            Method::Euler | Method::EulerExplicit => self.step_euler(s),
        };
        s.step += 1;
        s.t = s.step as f64 * self.spec.dt;
        Ok(info)
    }

    fn free_flow(phase: &[Complex64], x: &mut [Complex64]) {
        for (z, p) in x.iter_mut().zip(phase) {
            *z *= p;
        }
    }

    /// Symmetric splitting: half free flow, exact control flow, half free flow.
    pub fn step_strang(&mut self, s: &mut LockstepState) -> Result<StepInfo> {
        let dt = self.spec.dt;
        let fb0 = feedback(&s.x_av, self.ops, &self.params);
        let fb = match self.spec.sampling {
            FeedbackSampling::Initial => fb0,
            FeedbackSampling::Midpoint => {
                // First-order half step (free flow then frozen control) to sample the feedback.
                let mut pred = s.x_av.coeffs().to_vec();
                Self::free_flow(&self.half_phase, &mut pred);
                self.exp_av
                    .apply(self.ops, fb0.alpha, fb0.polarizability_coeff(), 0.5 * dt, &mut pred)?;
                feedback(&ModeState::from_raw(pred), self.ops, &self.params)
            }
        };

        let x = s.x_av.coeffs_mut();
        Self::free_flow(&self.half_phase, x);
        self.exp_av.apply(self.ops, fb.alpha, fb.polarizability_coeff(), dt, x)?;
        Self::free_flow(&self.half_phase, x);
        let drift_av = cnorm(x) - 1.0;

        let drift_eps = if self.spec.oscillating() {
            let u = oscillating_control(&fb, s.t + 0.5 * dt, self.spec.epsilon);
            let x = s.x_eps.coeffs_mut();
            Self::free_flow(&self.half_phase, x);
            self.exp_eps.apply(self.ops, u, u * u, dt, x)?;
            Self::free_flow(&self.half_phase, x);
            cnorm(x) - 1.0
        } else {
            s.x_eps = s.x_av.clone();
            drift_av
        };
        Ok(StepInfo { drift_eps, drift_av })
    }

    fn euler_update(&self, x: &mut ModeState, c1: f64, c2: f64) -> f64 {
        let dt = self.spec.dt;
        let raw = match self.spec.method {
            Method::EulerExplicit => {
                let rhs = generator_rhs(x.coeffs(), self.ops, c1, c2);
                x.coeffs().iter().zip(&rhs).map(|(z, r)| z + r * dt).collect::<Vec<_>>()
            }
            _ => {
                let c = x.coeffs();
                let h1x = self.ops.h1.mul_cvec(c);
                let h2x = self.ops.h2.mul_cvec(c);
                c.iter()
                    .zip(h1x.iter().zip(&h2x))
                    .zip(&self.full_phase)
                    .map(|((z, (a, b)), p)| (z - I * dt * (a * c1 + b * c2)) * p)
                    .collect()
            }
        };
        let norm = cnorm(&raw);
        *x = ModeState::from_raw(raw.into_iter().map(|z| z / norm).collect());
        norm - 1.0
    }

    /// One Euler step for both systems followed by projection onto the sphere.
    /// The control for `X_ε` is sampled at the left endpoint.
    pub fn step_euler(&mut self, s: &mut LockstepState) -> StepInfo {
        let fb = feedback(&s.x_av, self.ops, &self.params);
        let drift_eps = if self.spec.oscillating() {
            let u = oscillating_control(&fb, s.t, self.spec.epsilon);
            let mut x_eps = s.x_eps.clone();
            let d = self.euler_update(&mut x_eps, u, u * u);
            s.x_eps = x_eps;
            Some(d)
        } else {
            None
        };
        let mut x_av = s.x_av.clone();
        let drift_av = self.euler_update(&mut x_av, fb.alpha, fb.polarizability_coeff());
        s.x_av = x_av;
        if !self.spec.oscillating() {
            s.x_eps = s.x_av.clone();
        }
        StepInfo {
            drift_eps: drift_eps.unwrap_or(drift_av),
            drift_av,
        }
    }
}

/// One recorded sample of a lockstep run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub l_av: f64,
    pub dist_av: f64,
    pub dist_eps: f64,
    pub gap_h2: f64,
    pub u: f64,
    pub alpha: f64,
    pub beta: f64,
    pub norm_drift_eps: f64,
    pub norm_drift_av: f64,
}

impl TrajectoryRow {
    pub const COLUMNS: [&'static str; 10] = [
        "t",
        "L_av",
        "dist_av",
        "dist_eps",
        "gap_H2",
        "u",
        "alpha",
        "beta",
        "norm_drift_eps",
        "norm_drift_av",
    ];

    pub fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.l_av,
            self.dist_av,
            self.dist_eps,
            self.gap_h2,
            self.u,
            self.alpha,
            self.beta,
            self.norm_drift_eps,
            self.norm_drift_av,
        ]
    }
}

/// Runtime checks applied after every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitors {
    /// Largest tolerated `|‖X‖ - 1|` for either state.
    pub sphere_tol: f64,
    /// Largest tolerated per-step increase of `L(X_av)` (clip damping, Strang only).
    pub lyapunov_tol: f64,
    pub enabled: bool,
}

impl Default for Monitors {
    fn default() -> Self {
        Self {
            sphere_tol: 1e-6,
            lyapunov_tol: 1e-8,
            enabled: true,
        }
    }
}

/// Everything a lockstep run needs besides the initial state.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    pub ops: &'a ControlOperators,
    pub params: FeedbackParams,
    pub integrator: IntegratorSpec,
    pub dist_weight: SobolevWeight,
    pub h2_weight: SobolevWeight,
    pub monitors: Monitors,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub final_state: LockstepState,
    pub steps: u64,
    pub rows: usize,
    pub max_drift_eps: f64,
    pub max_drift_av: f64,
    /// Largest H² gap between the two states over every step, not only recorded ones.
    pub sup_gap: f64,
}

/// Number of steps of size `dt` covering `[0, t_final]`.
pub fn step_count(t_final: f64, dt: f64) -> u64 {
    (t_final / dt * (1.0 + 1e-12)).floor() as u64
}

impl<'a> Simulation<'a> {
    pub fn new(
        ops: &'a ControlOperators,
        params: FeedbackParams,
        integrator: IntegratorSpec,
        s: f64,
    ) -> Result<Self> {
        integrator.validate()?;
        Ok(Self {
            ops,
            params,
            integrator,
            dist_weight: SobolevWeight::new(&ops.h0, s)?,
            h2_weight: SobolevWeight::new(&ops.h0, 2.0)?,
            monitors: Monitors::default(),
        })
    }

    pub fn row(&self, s: &LockstepState, info: &StepInfo) -> TrajectoryRow {
        let fb = feedback(&s.x_av, self.ops, &self.params);
        TrajectoryRow {
            t: s.t,
            l_av: lyapunov(&s.x_av, self.ops, &self.params),
            dist_av: dist_to_target(&s.x_av, &self.dist_weight),
            dist_eps: dist_to_target(&s.x_eps, &self.dist_weight),
            gap_h2: h2_gap(&s.x_av, &s.x_eps, &self.h2_weight),
            u: oscillating_control(&fb, s.t, self.integrator.epsilon),
            alpha: fb.alpha,
            beta: fb.beta,
            norm_drift_eps: info.drift_eps,
            norm_drift_av: info.drift_av,
        }
    }

    /// Integrates from `x0` over `[0, t_final]`, handing every `stride`-th
    /// state (including `t = 0`) to `sink`.
    ///
    /// A monitor violation stops the run with [`Error::Monitor`]; rows
    /// already passed to `sink` are left as they are.
    pub fn run(
        &self,
        x0: ModeState,
        t_final: f64,
        stride: u64,
        mut sink: impl FnMut(&TrajectoryRow) -> Result<()>,
    ) -> Result<RunReport> {
        if stride == 0 {
            return Err(Error::Config("record stride must be at least 1".into()));
        }
        if x0.len() != self.ops.modes() {
            return Err(Error::Config(format!(
                "initial state has {} modes, operators have {}",
                x0.len(),
                self.ops.modes()
            )));
        }
        let steps = step_count(t_final, self.integrator.dt);
        let mut integrator = Integrator::new(self.ops, self.params, self.integrator)?;
        let mut state = LockstepState::new(x0);
        let mut info = StepInfo::default();
        let mut rows = 0;
        let mut max_drift_eps = 0.0f64;
        let mut max_drift_av = 0.0f64;
        let mut sup_gap = 0.0f64;
        let check_lyapunov = self.monitors.enabled
            && self.params.damping == crate::operators::Damping::Clip
            && self.integrator.method == Method::Strang;

        sink(&self.row(&state, &info))?;
        rows += 1;
        let mut l_prev = lyapunov(&state.x_av, self.ops, &self.params);

        for n in 1..=steps {
            self.check_gain(&state)?;
            info = integrator.step(&mut state)?;
            max_drift_eps = max_drift_eps.max(info.drift_eps.abs());
            max_drift_av = max_drift_av.max(info.drift_av.abs());
            sup_gap = sup_gap.max(h2_gap(&state.x_av, &state.x_eps, &self.h2_weight));
            if self.monitors.enabled {
                let norm_eps = state.x_eps.norm() - 1.0;
                let norm_av = state.x_av.norm() - 1.0;
                let worst = norm_eps.abs().max(norm_av.abs());
                if !(worst <= self.monitors.sphere_tol) {
                    return Err(Error::Monitor {
                        t: state.t,
                        reason: format!(
                            "state left the unit sphere (|‖X_eps‖-1| = {:e}, |‖X_av‖-1| = {:e})",
                            norm_eps.abs(),
                            norm_av.abs()
                        ),
                    });
                }
            }
            let l = lyapunov(&state.x_av, self.ops, &self.params);
            if check_lyapunov && l > l_prev + self.monitors.lyapunov_tol {
                return Err(Error::Monitor {
                    t: state.t,
                    reason: format!(
                        "Lyapunov function increased by {:e} in one step (tolerance {:e}); reduce dt or k",
                        l - l_prev,
                        self.monitors.lyapunov_tol
                    ),
                });
            }
            if !l.is_finite() {
                return Err(Error::Numerical(format!("non-finite Lyapunov value at t = {}", state.t)));
            }
            l_prev = l;
            if n % stride == 0 {
                sink(&self.row(&state, &info))?;
                rows += 1;
            }
        }
        Ok(RunReport {
            final_state: state,
            steps,
            rows,
            max_drift_eps,
            max_drift_av,
            sup_gap,
        })
    }

    fn check_gain(&self, state: &LockstepState) -> Result<()> {
        if !self.monitors.enabled {
            return Ok(());
        }
        let i2 = crate::operators::feedback_i(
            crate::operators::Coupling::Polarizability,
            &state.x_av,
            self.ops,
            &self.params,
        );
        let margin = 1.0 - self.params.k * i2;
        if margin <= 0.0 {
            return Err(Error::Monitor {
                t: state.t,
                reason: format!(
                    "gain condition 1 - k I2 > 0 violated (I2 = {i2}, k = {}); use a smaller k",
                    self.params.k
                ),
            });
        }
        Ok(())
    }
}
