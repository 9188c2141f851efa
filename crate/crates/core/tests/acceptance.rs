//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Lines go straight to the stderr handle so they show up even when the
//! test harness captures output.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;

use qstab::dynamics::{step_count, Integrator, IntegratorSpec, LockstepState, Method};
use qstab::harness::{
    refinement_check, run_experiment, run_sweep, simulate, ExperimentConfig, GammaSpec, Model,
    PRESETS,
};
use qstab::hypotheses::{check_hypotheses, resonance_scan, DEFAULT_COUPLING_TOL, DEFAULT_RESONANCE_TOL};
use qstab::metrics::{h2_gap, SobolevWeight};
use qstab::operators::{
    feedback, feedback_i, lyapunov, lyapunov_rate, ControlOperators, Coupling, Damping, FeedbackParams,
    ModeState,
};
use qstab::spectral::{sine_moment_matrix, GridFunction, SineBasisSpec, SpectralBasis};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{verdict}] criterion {id:>2} {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn validation(t_final: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("fig1").unwrap();
    cfg.t_final = t_final;
    cfg
}

fn integrate(ops: &ControlOperators, p: FeedbackParams, spec: IntegratorSpec, x0: &ModeState, t: f64) -> LockstepState {
    let mut integ = Integrator::new(ops, p, spec).unwrap();
    let mut s = LockstepState::new(x0.clone());
    for _ in 0..step_count(t, spec.dt) {
        integ.step(&mut s).unwrap();
    }
    s
}

#[test]
fn c01_spectral_exactness() {
    let start = Instant::now();
    let basis = SpectralBasis::build(&GridFunction::Zero, 50, 10).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let err = basis
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let exact = ((i + 1) as f64 * PI).powi(2);
            (l - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    report(
        1,
        "spectral exactness",
        err < 1e-10 && elapsed < 1.0,
        &format!("max rel err {err:.2e} (< 1e-10), {elapsed:.3} s (< 1 s)"),
    );
}

#[test]
fn c02_quadrature_oracle() {
    let s = sine_moment_matrix(&GridFunction::X2, SineBasisSpec::new(10).unwrap()).unwrap();
    let err = (1..=10)
        .map(|k| {
            let kk = k as f64;
            (s[(k - 1, k - 1)] - (1.0 / 3.0 - 1.0 / (2.0 * kk * kk * PI * PI))).abs()
        })
        .fold(0.0, f64::max);
    report(2, "quadrature oracle", err < 1e-10, &format!("max abs err {err:.2e} (< 1e-10)"));
}

#[test]
fn c03_ground_state_equilibrium() {
    let base = validation(10.0);
    let model = Model::build(&base).unwrap();
    let (_, p) = model.setup(&base).unwrap();
    let mut cfg = base;
    cfg.initial = vec![Complex64::new(1.0, 0.0)];
    cfg.gamma = GammaSpec::Explicit(p.gamma);
    cfg.stride = 1;
    cfg.record_interval = None;
    let out = simulate(&cfg).unwrap();
    let (mut u, mut l, mut d) = (0.0f64, 0.0f64, 0.0f64);
    for r in &out.rows {
        u = u.max(r.u.abs());
        l = l.max(r.l_av.abs());
        d = d.max(r.dist_av.abs()).max(r.dist_eps.abs());
    }
    let pass = !out.aborted() && out.rows.len() == 10_001 && u <= 1e-12 && l <= 1e-12 && d <= 1e-9;
    report(
        3,
        "ground-state equilibrium",
        pass,
        &format!("{} rows, sup|u| {u:.1e}, sup|L| {l:.1e}, sup dist {d:.1e}", out.rows.len()),
    );
}

#[test]
fn c04_norm_conservation() {
    let out = simulate(&validation(100.0)).unwrap();
    let steps = out.header.steps.unwrap_or(0);
    let de = out.header.max_drift_eps.unwrap_or(f64::INFINITY);
    let da = out.header.max_drift_av.unwrap_or(f64::INFINITY);
    report(
        4,
        "norm conservation",
        !out.aborted() && steps == 100_000 && de < 1e-9 && da < 1e-9,
        &format!("{steps} Strang steps, max |‖X‖-1| eps {de:.1e}, av {da:.1e} (< 1e-9)"),
    );
}

#[test]
fn c05_lyapunov_monotonicity() {
    let out = simulate(&validation(200.0)).unwrap();
    let worst = out
        .rows
        .windows(2)
        .map(|w| w[1].l_av - w[0].l_av)
        .fold(f64::NEG_INFINITY, f64::max);
    let l0 = out.rows[0].l_av;
    let lt = out.rows.last().unwrap().l_av;
    let pass = !out.aborted() && worst <= 1e-8 && lt < l0 && lt / l0 < 0.5 && (l0 - 0.75).abs() < 1e-12;
    report(
        5,
        "Lyapunov monotonicity",
        pass,
        &format!("max increase {worst:.1e} (<= 1e-8), L(0) {l0:.4}, L(200) {lt:.4}, ratio {:.3} (< 0.5)", lt / l0),
    );
}

/// Largest relative error between the central difference of `L` and the
/// closed-form rate at `t = 0.1, 0.2, ..., 10`.
fn derivative_error(ops: &ControlOperators, p: FeedbackParams, x0: &ModeState, dt: f64) -> f64 {
    let spec = IntegratorSpec::new(Method::Strang, dt, 0.0).unwrap();
    let mut integ = Integrator::new(ops, p, spec).unwrap();
    let mut s = LockstepState::new(x0.clone());
    let per_sample = (0.1 / dt).round() as u64;
    let last = 100 * per_sample + 1;
    let mut l = vec![lyapunov(&s.x_av, ops, &p)];
    let mut rates = Vec::new();
    for n in 1..=last {
        integ.step(&mut s).unwrap();
        l.push(lyapunov(&s.x_av, ops, &p));
        if n % per_sample == 0 && n < last {
            rates.push((n as usize, lyapunov_rate(&feedback(&s.x_av, ops, &p), &p)));
        }
    }
    assert_eq!(rates.len(), 100);
    rates
        .iter()
        .map(|&(n, rate)| {
            let fd = (l[n + 1] - l[n - 1]) / (2.0 * dt);
            (fd - rate).abs() / rate.abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn c06_derivative_identity() {
    let cfg = validation(10.0);
    let model = Model::build(&cfg).unwrap();
    let (x0, p) = model.setup(&cfg).unwrap();
    let e1 = derivative_error(&model.ops, p, &x0, 1e-4);
    let e2 = derivative_error(&model.ops, p, &x0, 5e-5);
    report(
        6,
        "derivative identity",
        e1 < 1e-2 && e2 < e1,
        &format!(
            "max rel err {e1:.2e} at dt=1e-4 (< 1e-2), {e2:.2e} at dt=5e-5, observed order {:.2}",
            (e1 / e2).log2()
        ),
    );
}

#[test]
fn c07_averaging_law() {
    let start = Instant::now();
    let mut cfg = validation(50.0);
    cfg.epsilons = vec![1e-3, 2e-4, 1e-4];
    cfg.dt_ratio = Some(0.1);
    let s = run_sweep(&cfg, false).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let sup: Vec<f64> = s.entries.iter().map(|e| e.sup_gap.unwrap_or(f64::NAN)).collect();
    let fin: Vec<f64> = s.entries.iter().map(|e| e.final_gap.unwrap_or(f64::NAN)).collect();
    let decreasing = sup[0] > sup[1] && sup[1] > sup[2];
    let sup_ratio = sup[0] / sup[2];
    let final_ratio = fin[0] / fin[2];
    let pass = !s.any_aborted()
        && decreasing
        && (5.0..=100.0).contains(&sup_ratio)
        && (10.0..=100.0).contains(&final_ratio)
        && elapsed < 600.0;
    report(
        7,
        "averaging law",
        pass,
        &format!(
            "sup gaps {:.3e} {:.3e} {:.3e} (decreasing: {decreasing}), sup ratio {sup_ratio:.2} in [5, 100], \
             final gaps {:.3e} {:.3e} {:.3e}, final ratio {final_ratio:.1} in [10, 100], {elapsed:.0} s (< 600 s)",
            sup[0], sup[1], sup[2], fin[0], fin[1], fin[2]
        ),
    );
}

#[test]
fn c08_integrator_cross_oracle() {
    let cfg = validation(1.0);
    let model = Model::build(&cfg).unwrap();
    let (x0, p) = model.setup(&cfg).unwrap();
    let ops = &model.ops;
    let h2 = SobolevWeight::new(&ops.h0, 2.0).unwrap();
    let eps = cfg.epsilon;

    let mut strang = Integrator::new(ops, p, IntegratorSpec::new(Method::Strang, 1e-3, eps).unwrap()).unwrap();
    let mut euler = Integrator::new(ops, p, IntegratorSpec::new(Method::Euler, 1e-5, eps).unwrap()).unwrap();
    let mut a = LockstepState::new(x0.clone());
    let mut b = LockstepState::new(x0.clone());
    let mut gap = 0.0f64;
    for _ in 0..1000 {
        strang.step(&mut a).unwrap();
        for _ in 0..100 {
            euler.step(&mut b).unwrap();
        }
        gap = gap
            .max(h2_gap(&a.x_av, &b.x_av, &h2))
            .max(h2_gap(&a.x_eps, &b.x_eps, &h2));
    }

    let run = |dt: f64| integrate(ops, p, IntegratorSpec::new(Method::Strang, dt, eps).unwrap(), &x0, 1.0);
    let (s1, s2, s4) = (run(1e-3), run(5e-4), run(2.5e-4));
    let order = |f: fn(&LockstepState) -> &ModeState| {
        (h2_gap(f(&s1), f(&s2), &h2) / h2_gap(f(&s2), f(&s4), &h2)).log2()
    };
    let order_av = order(|s| &s.x_av);
    let order_eps = order(|s| &s.x_eps);
    report(
        8,
        "integrator cross-oracle",
        gap < 1e-3 && order_av >= 1.9 && order_eps >= 1.9,
        &format!(
            "Euler vs Strang sup H2 gap {gap:.2e} (< 1e-3), Strang order av {order_av:.3}, eps {order_eps:.3} (>= 1.9)"
        ),
    );
}

#[test]
fn c09_mode_refinement() {
    let r = refinement_check(&validation(100.0), &[5, 10], false).unwrap();
    let d = &r.diffs[0];
    report(
        9,
        "mode-refinement stability",
        d.sup_lyapunov < 1e-2,
        &format!(
            "M=5 vs M=10 over {} rows: sup|dL| {:.2e} (< 1e-2), sup|d dist_av| {:.2e}",
            d.rows_compared, d.sup_lyapunov, d.sup_dist_av
        ),
    );
}

#[test]
fn c10_hypotheses_checker() {
    let free = SpectralBasis::build(&GridFunction::Zero, 50, 8).unwrap();
    let found = resonance_scan(free.eigenvalues(), DEFAULT_RESONANCE_TOL);
    let basis = SpectralBasis::build(&GridFunction::HarmonicCentered, 50, 8).unwrap();
    let ops = ControlOperators::build(&basis, &GridFunction::constant(1.0), &GridFunction::X).unwrap();
    let rep = check_hypotheses(&ops, DEFAULT_COUPLING_TOL, DEFAULT_RESONANCE_TOL);
    let expect: Vec<usize> = (2..=8).collect();
    report(
        10,
        "hypotheses checker",
        !found.is_empty() && rep.j0 == expect,
        &format!("V=0, M=8: {} resonant quadruple(s); Q1=1: J0 = {:?}", found.len(), rep.j0),
    );
}

/// Deterministic grid of states on the unit sphere of C^5.
fn enumerated_states() -> Vec<ModeState> {
    let mut out = Vec::with_capacity(1000);
    for a in 0..10 {
        for b in 0..10 {
            for c in 0..10 {
                let coeffs = (0..5)
                    .map(|k| {
                        let amp = 1.0 + ((a + b * k + c * k * k) % 7) as f64;
                        let amp = if k > 0 && (a + k) % 4 == 0 { 0.0 } else { amp };
                        let phase = 0.61 * a as f64 * k as f64 + 0.29 * b as f64 + 1.37 * c as f64 * (k % 3) as f64;
                        Complex64::from_polar(amp, phase)
                    })
                    .collect();
                out.push(ModeState::normalized(coeffs).unwrap());
            }
        }
    }
    out
}

#[test]
fn c11_feedback_sign_properties() {
    let cfg = validation(1.0);
    let model = Model::build(&cfg).unwrap();
    let (_, clip) = model.setup(&cfg).unwrap();
    let smooth = FeedbackParams::new(clip.k, clip.gamma, Damping::Smooth).unwrap();
    let ops = &model.ops;
    let states = enumerated_states();
    let (mut neg_beta, mut zero_mismatch, mut alpha_err, mut phase_err) = (0usize, 0usize, 0.0f64, 0.0f64);
    let mut negative_i2 = 0usize;
    for (idx, x) in states.iter().enumerate() {
        let rotated = x.rotated(0.37 * idx as f64 + 0.1);
        for p in [clip, smooth] {
            let fb = feedback(x, ops, &p);
            let i1 = feedback_i(Coupling::Dipolar, x, ops, &p);
            let i2 = feedback_i(Coupling::Polarizability, x, ops, &p);
            if fb.beta < 0.0 {
                neg_beta += 1;
            }
            if (fb.beta == 0.0) != (i2 >= 0.0) {
                zero_mismatch += 1;
            }
            if i2 < 0.0 && p.damping == Damping::Clip {
                negative_i2 += 1;
            }
            alpha_err = alpha_err.max((fb.alpha + p.k * i1).abs());
            let fr = feedback(&rotated, ops, &p);
            phase_err = phase_err
                .max((fr.alpha - fb.alpha).abs())
                .max((fr.beta - fb.beta).abs())
                .max((fr.i1 - fb.i1).abs())
                .max((fr.i2 - fb.i2).abs())
                .max((lyapunov(&rotated, ops, &p) - lyapunov(x, ops, &p)).abs());
        }
    }
    let pass = states.len() == 1000
        && neg_beta == 0
        && zero_mismatch == 0
        && alpha_err <= 1e-15
        && phase_err <= 1e-12
        && negative_i2 > 0
        && negative_i2 < states.len();
    report(
        11,
        "feedback sign properties",
        pass,
        &format!(
            "{} states x 2 damping laws, {negative_i2} with I2 < 0: beta<0 {neg_beta}, beta=0 vs I2>=0 mismatches {zero_mismatch}, \
             |alpha + k I1| {alpha_err:.1e}, phase variation {phase_err:.1e} (<= 1e-12)",
            states.len()
        ),
    );
}

#[test]
fn c12_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut identical = 0;
    let mut files = 0;
    for name in PRESETS {
        let mut cfg = ExperimentConfig::preset(name).unwrap();
        cfg.t_final = 1.0;
        let mut outputs = Vec::new();
        for rep in 0..2 {
            cfg.output = dir.path().join(format!("{name}_{rep}.csv"));
            let mut paths = if cfg.epsilons.is_empty() {
                vec![run_experiment(&cfg).unwrap().path.unwrap()]
            } else {
                let s = run_sweep(&cfg, true).unwrap();
                let mut p: Vec<_> = s.entries.iter().filter_map(|e| e.output.clone()).collect();
                p.extend(s.summary_path);
                p
            };
            paths.sort();
            outputs.push(paths.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>());
        }
        files += outputs[0].len();
        identical += outputs[0]
            .iter()
            .zip(&outputs[1])
            .filter(|(a, b)| a == b && !a.is_empty())
            .count();
    }
    report(
        12,
        "determinism",
        identical == files && files >= PRESETS.len(),
        &format!("{identical}/{files} CSV outputs byte-identical across repeated runs of {} presets (T = 1)", PRESETS.len()),
    );
}
