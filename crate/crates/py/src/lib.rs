//! Python bindings: configs, operator models, runs and sweeps.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qstab::dynamics::TrajectoryRow;
use qstab::harness::{self, ExperimentConfig, Model, RunOutcome};
use qstab::hypotheses::{self, DEFAULT_COUPLING_TOL, DEFAULT_RESONANCE_TOL};
use qstab::metrics::{dist_to_target, SobolevWeight};
use qstab::operators::{self, FeedbackParams, ModeState};
use qstab::spectral::{GridFunction, SpectralBasis};
use qstab::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) => PyValueError::new_err(e.to_string()),
        Error::Io { .. } | Error::Record { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Experiment configuration; accepts the same `key = value` text as the CLI.
#[pyclass(name = "Config", module = "qstab_py")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        ExperimentConfig::parse(text).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        ExperimentConfig::preset(name).map(|inner| Self { inner }).map_err(py_err)
    }

    /// Config file path or preset name.
    #[staticmethod]
    fn load(source: &str) -> PyResult<Self> {
        ExperimentConfig::load(source).map(|inner| Self { inner }).map_err(py_err)
    }

    /// Sets one key; the value is converted with `str()`.
    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let text = value.str()?.to_string();
        let mut next = self.inner.clone();
        next.set(key, &text).map_err(py_err)?;
        next.validate().map_err(py_err)?;
        self.inner = next;
        Ok(())
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.modes
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.effective_dt()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final
    }

    fn __repr__(&self) -> String {
        format!("Config(name={:?}, M={}, T={})", self.inner.name, self.inner.modes, self.inner.t_final)
    }
}

/// Eigenbasis, control matrices and feedback parameters for one config.
#[pyclass(name = "Model", module = "qstab_py")]
struct PyModel {
    inner: Model,
    x0: ModeState,
    params: FeedbackParams,
}

impl PyModel {
    fn state(&self, coeffs: Vec<Complex64>) -> PyResult<ModeState> {
        if coeffs.len() != self.inner.ops.modes() {
            return Err(PyValueError::new_err(format!(
                "state has {} coefficients, model has {} modes",
                coeffs.len(),
                self.inner.ops.modes()
            )));
        }
        ModeState::normalized(coeffs).map_err(py_err)
    }
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(py: Python<'_>, config: &PyConfig) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let inner = py.detach(|| Model::build(&cfg)).map_err(py_err)?;
        let (x0, params) = inner.setup(&cfg).map_err(py_err)?;
        Ok(Self { inner, x0, params })
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.ops.h0.clone()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.params.gamma
    }

    #[getter]
    fn k(&self) -> f64 {
        self.params.k
    }

    fn h1(&self) -> Vec<Vec<f64>> {
        self.inner.ops.h1.to_rows()
    }

    fn h2(&self) -> Vec<Vec<f64>> {
        self.inner.ops.h2.to_rows()
    }

    fn initial_state(&self) -> Vec<Complex64> {
        self.x0.coeffs().to_vec()
    }

    /// Lyapunov function of a state (normalized first).
    fn lyapunov(&self, state: Vec<Complex64>) -> PyResult<f64> {
        Ok(operators::lyapunov(&self.state(state)?, &self.inner.ops, &self.params))
    }

    /// `{"i1", "i2", "alpha", "beta", "rate"}` at a state.
    fn feedback<'py>(&self, py: Python<'py>, state: Vec<Complex64>) -> PyResult<Bound<'py, PyDict>> {
        let fb = operators::feedback(&self.state(state)?, &self.inner.ops, &self.params);
        let d = PyDict::new(py);
        d.set_item("i1", fb.i1)?;
        d.set_item("i2", fb.i2)?;
        d.set_item("alpha", fb.alpha)?;
        d.set_item("beta", fb.beta)?;
        d.set_item("rate", operators::lyapunov_rate(&fb, &self.params))?;
        Ok(d)
    }

    #[pyo3(signature = (state, s = 1.8))]
    fn dist_to_target(&self, state: Vec<Complex64>, s: f64) -> PyResult<f64> {
        let w = SobolevWeight::new(&self.inner.ops.h0, s).map_err(py_err)?;
        Ok(dist_to_target(&self.state(state)?, &w))
    }

    #[pyo3(signature = (coupling_tol = DEFAULT_COUPLING_TOL, resonance_tol = DEFAULT_RESONANCE_TOL))]
    fn check_hypotheses<'py>(
        &self,
        py: Python<'py>,
        coupling_tol: f64,
        resonance_tol: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = hypotheses::check_hypotheses(&self.inner.ops, coupling_tol, resonance_tol);
        let d = PyDict::new(py);
        d.set_item("c1", r.c1.clone())?;
        d.set_item("c2", r.c2.clone())?;
        d.set_item("j0", r.j0.clone())?;
        d.set_item("j_neq0", r.j_neq0.clone())?;
        d.set_item("uncoupled", r.uncoupled.clone())?;
        let res: Vec<(usize, usize, usize, f64)> = r.resonances.iter().map(|q| (q.k, q.p, q.q, q.gap)).collect();
        d.set_item("resonances", res)?;
        d.set_item("coupling_ok", r.coupling_ok())?;
        d.set_item("resonance_ok", r.resonance_ok())?;
        d.set_item("report", r.to_string())?;
        Ok(d)
    }
}

fn outcome_dict<'py>(py: Python<'py>, o: &RunOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (i, col) in TrajectoryRow::COLUMNS.iter().enumerate() {
        let values: Vec<f64> = o.rows.iter().map(|r| r.values()[i]).collect();
        d.set_item(*col, values)?;
    }
    let h = &o.header;
    d.set_item("eigenvalues", h.eigenvalues.clone())?;
    d.set_item("gamma", h.gamma)?;
    d.set_item("k", h.k)?;
    d.set_item("dt", h.dt)?;
    d.set_item("epsilon", h.epsilon)?;
    d.set_item("sup_gap", h.sup_gap)?;
    d.set_item("aborted", h.aborted)?;
    d.set_item("abort_reason", h.abort_reason.clone())?;
    d.set_item("exit_code", h.exit_code)?;
    d.set_item("path", o.path.as_ref().map(|p| p.display().to_string()))?;
    Ok(d)
}

/// Runs a config in memory and returns its recorded columns.
#[pyfunction]
fn simulate<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let out = py.detach(|| harness::simulate(&cfg)).map_err(py_err)?;
    outcome_dict(py, &out)
}

/// Runs a config and writes its CSV record and header.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let out = py.detach(|| harness::run_experiment(&cfg)).map_err(py_err)?;
    outcome_dict(py, &out)
}

/// One run per epsilon; returns per-run gaps and pairwise gap ratios.
#[pyfunction]
#[pyo3(signature = (config, write = false))]
fn run_sweep<'py>(py: Python<'py>, config: &PyConfig, write: bool) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let s = py.detach(|| harness::run_sweep(&cfg, write)).map_err(py_err)?;
    let entries = s
        .entries
        .iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("epsilon", e.epsilon)?;
            d.set_item("dt", e.dt)?;
            d.set_item("sup_gap", e.sup_gap)?;
            d.set_item("final_gap", e.final_gap)?;
            d.set_item("aborted", e.aborted)?;
            d.set_item("output", e.output.as_ref().map(|p| p.display().to_string()))?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let ratios: Vec<(f64, f64, Option<f64>, Option<f64>)> = s
        .ratios
        .iter()
        .map(|r| (r.eps_coarse, r.eps_fine, r.sup_ratio, r.final_ratio))
        .collect();
    let d = PyDict::new(py);
    d.set_item("entries", entries)?;
    d.set_item("ratios", ratios)?;
    Ok(d)
}

/// Writes two-column plot files from a trajectory CSV; returns their paths.
#[pyfunction]
#[pyo3(signature = (record, out_dir = None))]
fn export_plotdata(record: PathBuf, out_dir: Option<PathBuf>) -> PyResult<Vec<String>> {
    let paths = harness::export_plotdata(&record, out_dir.as_deref()).map_err(py_err)?;
    Ok(paths.iter().map(|p| p.display().to_string()).collect())
}

/// First `m` eigenvalues of `-d²/dx² + V` on (0, 1) from `n` sine modes.
#[pyfunction]
#[pyo3(signature = (potential, m, n = 50))]
fn eigenvalues(potential: &str, m: usize, n: usize) -> PyResult<Vec<f64>> {
    let v: GridFunction = potential.parse().map_err(py_err)?;
    let basis = SpectralBasis::build(&v, n, m).map_err(py_err)?;
    Ok(basis.eigenvalues().to_vec())
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    harness::PRESETS.to_vec()
}

#[pymodule]
fn qstab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(export_plotdata, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
