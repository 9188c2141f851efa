//! Running configured experiments: single runs, ε sweeps, mode refinement
//! and plot-data export.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{resolve_output, ExperimentConfig, GammaSpec};
use super::record::{write_atomic, CsvTable, RecordWriter, TrajectoryHeader, SCHEMA};
use crate::dynamics::{Monitors, Simulation, TrajectoryRow};
use crate::error::{Error, Result};
use crate::operators::{gamma_for_target, ControlOperators, FeedbackParams, ModeState};
use crate::spectral::SpectralBasis;

/// Eigenbasis and control matrices for one `(V, Q1, Q2, N, M)`.
#[derive(Debug, Clone)]
pub struct Model {
    pub basis: SpectralBasis,
    pub ops: ControlOperators,
}

impl Model {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let basis = SpectralBasis::build(&cfg.potential, cfg.n_sine, cfg.modes)?;
        let ops = ControlOperators::build(&basis, &cfg.q1, &cfg.q2)?;
        Ok(Self { basis, ops })
    }

    /// Initial state and feedback parameters for `cfg`, with `γ` resolved.
    pub fn setup(&self, cfg: &ExperimentConfig) -> Result<(ModeState, FeedbackParams)> {
        let x0 = cfg.initial_state()?;
        let gamma = match cfg.gamma {
            GammaSpec::Explicit(g) => g,
            GammaSpec::Target(t) => gamma_for_target(&x0, &self.ops, t)?,
        };
        Ok((x0, FeedbackParams::new(cfg.k, gamma, cfg.damping)?))
    }
}

/// Rows and metadata of one run; aborted runs keep their partial rows.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub header: TrajectoryHeader,
    pub rows: Vec<TrajectoryRow>,
    pub path: Option<PathBuf>,
}

impl RunOutcome {
    pub fn aborted(&self) -> bool {
        self.header.aborted
    }

    pub fn exit_code(&self) -> i32 {
        self.header.exit_code
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.rows.last().map(|r| r.gap_h2)
    }
}

fn execute(
    cfg: &ExperimentConfig,
    model: &Model,
    mut writer: Option<RecordWriter>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let (x0, params) = model.setup(cfg)?;
    let integrator = cfg.integrator()?;
    let mut sim = Simulation::new(&model.ops, params, integrator, cfg.s)?;
    sim.monitors = Monitors {
        enabled: cfg.monitors,
        ..Monitors::default()
    };
    let stride = cfg.effective_stride();
    let mut rows = Vec::new();
    let result = sim.run(x0, cfg.t_final, stride, |row| {
        if let Some(w) = writer.as_mut() {
            w.write_row(row)?;
        }
        rows.push(*row);
        Ok(())
    });

    let mut header = TrajectoryHeader {
        schema: SCHEMA.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        name: cfg.name.clone(),
        config: cfg.to_text(),
        columns: TrajectoryRow::COLUMNS.iter().map(|c| c.to_string()).collect(),
        eigenvalues: model.ops.h0.clone(),
        gamma: params.gamma,
        k: params.k,
        dt: integrator.dt,
        epsilon: integrator.epsilon,
        stride,
        t_final: cfg.t_final,
        rows: rows.len(),
        steps: None,
        sup_gap: None,
        max_drift_eps: None,
        max_drift_av: None,
        aborted: false,
        abort_reason: None,
        exit_code: 0,
    };
    match result {
        Ok(report) => {
            header.steps = Some(report.steps);
            header.sup_gap = Some(report.sup_gap);
            header.max_drift_eps = Some(report.max_drift_eps);
            header.max_drift_av = Some(report.max_drift_av);
        }
        Err(e @ (Error::Monitor { .. } | Error::Numerical(_) | Error::Eigensolver { .. })) => {
            header.aborted = true;
            header.abort_reason = Some(e.to_string());
            header.exit_code = e.exit_code();
        }
        Err(e) => return Err(e),
    }
    let path = match writer {
        Some(w) => Some(w.finish(&header)?),
        None => None,
    };
    Ok(RunOutcome { header, rows, path })
}

/// Runs `cfg` in memory without touching the filesystem.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    execute(cfg, &Model::build(cfg)?, None)
}

/// Runs `cfg` and writes the trajectory CSV and header to `cfg.resolved_output()`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let model = Model::build(cfg)?;
    run_with_model(cfg, &model, &cfg.resolved_output())
}

fn run_with_model(cfg: &ExperimentConfig, model: &Model, path: &Path) -> Result<RunOutcome> {
    execute(cfg, model, Some(RecordWriter::create(path)?))
}

/// `dir/stem.csv` + tag -> `dir/stem_tag.csv`
fn tagged_path(base: &Path, tag: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{stem}_{tag}.{ext}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub dt: f64,
    pub output: Option<PathBuf>,
    pub sup_gap: Option<f64>,
    pub final_gap: Option<f64>,
    pub aborted: bool,
    pub abort_reason: Option<String>,
}

/// Gap ratios between a coarser and a finer `ε`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRatio {
    pub eps_coarse: f64,
    pub eps_fine: f64,
    pub sup_ratio: Option<f64>,
    pub final_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub entries: Vec<SweepEntry>,
    pub ratios: Vec<SweepRatio>,
    pub summary_path: Option<PathBuf>,
}

impl SweepSummary {
    pub fn any_aborted(&self) -> bool {
        self.entries.iter().any(|e| e.aborted)
    }
}

/// Runs one trajectory per `ε` in `cfg.epsilons` (or `cfg.epsilon` alone),
/// concurrently, sharing the operator matrices.
///
/// With `write` set, each run goes to `<output>_eps<ε>.csv` and the table to
/// `<output>_sweep.csv`.
pub fn run_sweep(cfg: &ExperimentConfig, write: bool) -> Result<SweepSummary> {
    cfg.validate()?;
    let epsilons = if cfg.epsilons.is_empty() {
        vec![cfg.epsilon]
    } else {
        cfg.epsilons.clone()
    };
    let model = Model::build(cfg)?;
    let base = cfg.resolved_output();
    let outcomes: Vec<Result<RunOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = epsilons
            .iter()
            .map(|&eps| {
                let run_cfg = cfg.with_epsilon(eps);
                let path = tagged_path(&base, &format!("eps{eps:e}"));
                let model = &model;
                scope.spawn(move || {
                    if write {
                        run_with_model(&run_cfg, model, &path)
                    } else {
                        execute(&run_cfg, model, None)
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("sweep worker panicked".into()))))
            .collect()
    });

    let mut entries = Vec::with_capacity(epsilons.len());
    for (eps, outcome) in epsilons.iter().zip(outcomes) {
        let o = outcome?;
        entries.push(SweepEntry {
            epsilon: *eps,
            dt: o.header.dt,
            output: o.path.clone(),
            sup_gap: o.header.sup_gap,
            final_gap: if o.aborted() { None } else { o.final_gap() },
            aborted: o.aborted(),
            abort_reason: o.header.abort_reason.clone(),
        });
    }
    let ratio = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let mut ratios = Vec::new();
    for (i, a) in entries.iter().enumerate() {
        for b in entries.iter().skip(i + 1) {
            let (c, f) = if a.epsilon >= b.epsilon { (a, b) } else { (b, a) };
            ratios.push(SweepRatio {
                eps_coarse: c.epsilon,
                eps_fine: f.epsilon,
                sup_ratio: ratio(c.sup_gap, f.sup_gap),
                final_ratio: ratio(c.final_gap, f.final_gap),
            });
        }
    }
    let mut summary = SweepSummary {
        entries,
        ratios,
        summary_path: None,
    };
    if write {
        let path = tagged_path(&base, "sweep");
        write_atomic(&path, sweep_table(&summary).as_bytes())?;
        summary.summary_path = Some(path);
    }
    Ok(summary)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.16e}"))
}

fn sweep_table(s: &SweepSummary) -> String {
    let mut out = String::from("epsilon,dt,sup_gap_H2,final_gap_H2,aborted\n");
    for e in &s.entries {
        out.push_str(&format!(
            "{:.16e},{:.16e},{},{},{}\n",
            e.epsilon,
            e.dt,
            opt(e.sup_gap),
            opt(e.final_gap),
            e.aborted
        ));
    }
    out
}

/// Largest differences between runs at two truncation levels.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementDiff {
    pub modes_coarse: usize,
    pub modes_fine: usize,
    pub rows_compared: usize,
    pub sup_lyapunov: f64,
    pub sup_dist_av: f64,
    pub sup_dist_eps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub modes: Vec<usize>,
    pub diffs: Vec<RefinementDiff>,
    pub outputs: Vec<PathBuf>,
}

/// Repeats `cfg` for each `M` in `modes` and compares consecutive levels
/// row by row on the shared time grid.
pub fn refinement_check(cfg: &ExperimentConfig, modes: &[usize], write: bool) -> Result<RefinementReport> {
    if modes.len() < 2 {
        return Err(Error::Config("refinement needs at least two mode counts".into()));
    }
    let configs: Vec<ExperimentConfig> = modes
        .iter()
        .map(|&m| {
            let mut c = cfg.clone();
            c.modes = m;
            c.validate().map(|_| c)
        })
        .collect::<Result<_>>()?;
    let base = cfg.resolved_output();
    let outcomes: Vec<Result<RunOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| {
                let path = tagged_path(&base, &format!("M{}", c.modes));
                scope.spawn(move || {
                    let model = Model::build(c)?;
                    if write {
                        run_with_model(c, &model, &path)
                    } else {
                        execute(c, &model, None)
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("refinement worker panicked".into()))))
            .collect()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(bad) = outcomes.iter().find(|o| o.aborted()) {
        return Err(Error::Monitor {
            t: bad.rows.last().map_or(0.0, |r| r.t),
            reason: format!(
                "refinement run with M = {} aborted: {}",
                bad.header.eigenvalues.len(),
                bad.header.abort_reason.as_deref().unwrap_or("unknown")
            ),
        });
    }
    let diffs = outcomes
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let n = a.rows.len().min(b.rows.len());
            let sup = |f: fn(&TrajectoryRow) -> f64| {
                a.rows[..n]
                    .iter()
                    .zip(&b.rows[..n])
                    .map(|(x, y)| (f(x) - f(y)).abs())
                    .fold(0.0, f64::max)
            };
            RefinementDiff {
                modes_coarse: a.header.eigenvalues.len(),
                modes_fine: b.header.eigenvalues.len(),
                rows_compared: n,
                sup_lyapunov: sup(|r| r.l_av),
                sup_dist_av: sup(|r| r.dist_av),
                sup_dist_eps: sup(|r| r.dist_eps),
            }
        })
        .collect();
    Ok(RefinementReport {
        modes: modes.to_vec(),
        diffs,
        outputs: outcomes.iter().filter_map(|o| o.path.clone()).collect(),
    })
}

/// Columns exported by [`export_plotdata`], with the file suffix used for each.
pub const PLOT_SERIES: [(&str, &str); 4] = [
    ("L_av", "lyapunov"),
    ("dist_av", "dist_av"),
    ("dist_eps", "dist_eps"),
    ("gap_H2", "gap_h2"),
];

/// Writes one two-column `t value` file per plotted series next to `record`
/// (or into `out_dir`).
pub fn export_plotdata(record: &Path, out_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let table = CsvTable::read(record)?;
    let t = table.column("t")?;
    let series = PLOT_SERIES
        .iter()
        .map(|(col, suffix)| table.column(col).map(|v| (*col, *suffix, v)))
        .collect::<Result<Vec<_>>>()?;
    let stem = record.file_stem().and_then(|s| s.to_str()).unwrap_or("record");
    let dir = match out_dir {
        Some(d) => resolve_output(d),
        None => record.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let mut written = Vec::new();
    for (col, suffix, values) in series {
        let mut text = format!("# t {col}\n");
        for (ti, vi) in t.iter().zip(&values) {
            text.push_str(&format!("{ti:.16e} {vi:.16e}\n"));
        }
        let path = dir.join(format!("{stem}.{suffix}.dat"));
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(name: &str, t: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(name).unwrap();
        c.t_final = t;
        c
    }

    #[test]
    fn tagged_paths() {
        assert_eq!(tagged_path(Path::new("a/b.csv"), "eps1e-3"), PathBuf::from("a/b_eps1e-3.csv"));
        assert_eq!(tagged_path(Path::new("run"), "M5"), PathBuf::from("run_M5.csv"));
    }

    #[test]
    fn simulate_records_expected_rows() {
        let out = simulate(&short("fig1", 1.0)).unwrap();
        assert!(!out.aborted());
        assert_eq!(out.rows.len(), 11);
        assert!((out.rows[0].l_av - 0.75).abs() < 1e-12);
        assert_eq!(out.header.steps, Some(1000));
    }

    #[test]
    fn monitor_abort_keeps_partial_rows() {
        let mut c = short("fig1", 5.0);
        c.k = 1e4;
        let out = simulate(&c).unwrap();
        assert!(out.aborted());
        assert_eq!(out.exit_code(), 2);
        assert!(!out.rows.is_empty());
    }

    #[test]
    fn sweep_without_output() {
        let mut c = short("fig3-4", 0.2);
        c.epsilons = vec![1e-2, 1e-3];
        let s = run_sweep(&c, false).unwrap();
        assert_eq!(s.entries.len(), 2);
        assert_eq!(s.ratios.len(), 1);
        assert!(s.ratios[0].sup_ratio.unwrap() > 1.0);
    }

    #[test]
    fn refinement_needs_two_levels() {
        assert!(refinement_check(&short("fig1", 0.1), &[5], false).is_err());
        let r = refinement_check(&short("fig1", 0.5), &[5, 6], false).unwrap();
        assert_eq!(r.diffs.len(), 1);
        assert!(r.diffs[0].sup_lyapunov < 1e-6);
    }
}
