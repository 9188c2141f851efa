//! Truncated eigenbasis of `-d²/dx² + V` on `[0, 1]` with Dirichlet
//! conditions, expanded in the free sine modes `√2 sin(jπx)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};

/// Real function on `[0, 1]`: a potential or a dipolar/polarizability moment.
#[derive(Clone)]
pub enum GridFunction {
    Zero,
    /// `(x - 1/2)²`
    HarmonicCentered,
    X,
    X2,
    CosX,
    Cos2X,
    /// `Σ c_i x^i`
    Polynomial(Vec<f64>),
    /// `Σ a_m cos(m x)`
    CosineSeries(Vec<f64>),
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl GridFunction {
    pub fn constant(c: f64) -> Self {
        GridFunction::Polynomial(vec![c])
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        GridFunction::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GridFunction::Zero => 0.0,
            GridFunction::HarmonicCentered => (x - 0.5) * (x - 0.5),
            GridFunction::X => x,
            GridFunction::X2 => x * x,
            GridFunction::CosX => x.cos(),
            GridFunction::Cos2X => (2.0 * x).cos(),
            GridFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
            GridFunction::CosineSeries(a) => a
                .iter()
                .enumerate()
                .map(|(m, &am)| am * (m as f64 * x).cos())
                .sum(),
            GridFunction::Custom { f, .. } => f(x),
        }
    }
}

impl fmt::Debug for GridFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GridFunction({self})")
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl fmt::Display for GridFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridFunction::Zero => f.write_str("zero"),
            GridFunction::HarmonicCentered => f.write_str("harmonic_centered"),
            GridFunction::X => f.write_str("x"),
            GridFunction::X2 => f.write_str("x2"),
            GridFunction::CosX => f.write_str("cosx"),
            GridFunction::Cos2X => f.write_str("cos2x"),
            GridFunction::Polynomial(c) => write!(f, "poly:{}", join(c)),
            GridFunction::CosineSeries(a) => write!(f, "cos:{}", join(a)),
            GridFunction::Custom { name, .. } => write!(f, "custom:{name}"),
        }
    }
}

impl FromStr for GridFunction {
    type Err = Error;

    /// Accepts the named built-ins, `const:<c>`, `poly:c0,c1,...` and `cos:a0,a1,...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let coeffs = |list: &str| -> Result<Vec<f64>> {
            let parsed = list
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("bad coefficient list {list:?}: {e}")))?;
            if parsed.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(format!("non-finite coefficient in {list:?}")));
            }
            Ok(parsed)
        };
        Ok(match s {
            "zero" => GridFunction::Zero,
            "harmonic_centered" => GridFunction::HarmonicCentered,
            "x" => GridFunction::X,
            "x2" => GridFunction::X2,
            "cosx" => GridFunction::CosX,
            "cos2x" => GridFunction::Cos2X,
            "one" => GridFunction::constant(1.0),
            _ => {
                if let Some(rest) = s.strip_prefix("poly:") {
                    GridFunction::Polynomial(coeffs(rest)?)
                } else if let Some(rest) = s.strip_prefix("cos:") {
                    GridFunction::CosineSeries(coeffs(rest)?)
                } else if let Some(rest) = s.strip_prefix("const:") {
                    GridFunction::Polynomial(coeffs(rest)?)
                } else {
                    return Err(Error::Config(format!("unknown function {s:?}")));
                }
            }
        })
    }
}

const GL_POINTS: usize = 16;
const QUAD_TOL: f64 = 1e-12;
const QUAD_MAX_PANELS: usize = 1 << 16;

/// 16-point Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton
/// iteration on the Legendre recurrence.
fn gauss_legendre_16() -> &'static ([f64; GL_POINTS], [f64; GL_POINTS]) {
    static RULE: OnceLock<([f64; GL_POINTS], [f64; GL_POINTS])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        let mut nodes = [0.0; GL_POINTS];
        let mut weights = [0.0; GL_POINTS];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

fn composite_gl(f: &dyn Fn(f64) -> f64, panels: usize) -> f64 {
    let (nodes, weights) = gauss_legendre_16();
    let h = 1.0 / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            acc += w * f(mid + half * x);
        }
        total += acc * half;
    }
    total
}

/// `∫₀¹ f(x) dx` by composite 16-point Gauss–Legendre, doubling the panel
/// count until successive estimates differ by less than 1e-12.
pub fn quadrature(f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut panels = 1;
    let mut prev = composite_gl(&f, panels);
    if !prev.is_finite() {
        return Err(Error::Quadrature {
            panels,
            last_delta: f64::NAN,
        });
    }
    loop {
        panels *= 2;
        let next = composite_gl(&f, panels);
        let delta = (next - prev).abs();
        if !next.is_finite() || panels >= QUAD_MAX_PANELS {
            return Err(Error::Quadrature {
                panels,
                last_delta: delta,
            });
        }
        if delta < QUAD_TOL {
            return Ok(next);
        }
        prev = next;
    }
}

/// Free sine mode count `N` for the expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SineBasisSpec {
    pub n: usize,
}

impl SineBasisSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("sine basis needs N >= 1".into()));
        }
        Ok(Self { n })
    }
}

/// Matrix `(∫ f · 2 sin(iπx) sin(jπx))_{i,j=1..N}`.
///
/// Uses `2 sin a sin b = cos(a - b) - cos(a + b)`, so only the cosine
/// moments `∫ f cos(mπx)` for `m = 0..2N` are integrated.
pub fn sine_moment_matrix(f: &GridFunction, spec: SineBasisSpec) -> Result<Matrix> {
    let n = spec.n;
    let moments = (0..=2 * n)
        .map(|m| {
            let freq = m as f64 * PI;
            quadrature(|x| f.eval(x) * (freq * x).cos())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = Matrix::zeros(n);
    for i in 1..=n {
        for j in i..=n {
            let v = moments[j - i] - moments[i + j];
            out[(i - 1, j - 1)] = v;
            out[(j - 1, i - 1)] = v;
        }
    }
    Ok(out)
}

/// `B = diag((kπ)²) + (⟨V φ_i, φ_j⟩)` in the free sine basis.
pub fn potential_matrix(v: &GridFunction, spec: SineBasisSpec) -> Result<Matrix> {
    let mut b = sine_moment_matrix(v, spec)?;
    for k in 1..=spec.n {
        let kpi = k as f64 * PI;
        b[(k - 1, k - 1)] += kpi * kpi;
    }
    Ok(b)
}

/// Retained eigenpairs of `-Δ + V`.
///
/// Mode indices are zero-based in this API: mode 0 is the ground state.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    /// `eigvecs[k]` holds the sine-basis coefficients of mode `k`.
    eigvecs: Vec<Vec<f64>>,
    n_sine: usize,
}

/// Gap below which neighbouring eigenvalues are flagged as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;
const SIGN_THRESHOLD: f64 = 1e-8;

/// Keeps the `m` lowest eigenpairs of `b`, with the first component of
/// magnitude above 1e-8 made positive.
pub fn solve_eigenbasis(b: &Matrix, m: usize) -> Result<SpectralBasis> {
    let n = b.dim();
    if m == 0 || m > n {
        return Err(Error::Config(format!(
            "retained mode count M = {m} must satisfy 1 <= M <= N = {n}"
        )));
    }
    if !b.is_symmetric(1e-12 * b.frobenius_norm().max(1.0)) {
        return Err(Error::Numerical(format!(
            "potential matrix is not symmetric (asymmetry {:e})",
            b.asymmetry()
        )));
    }
    let eig = symmetric_eigen(b)?;
    let eigenvalues = eig.values[..m].to_vec();
    let eigvecs = eig.vectors[..m]
        .iter()
        .map(|v| {
            let lead = v.iter().find(|c| c.abs() > SIGN_THRESHOLD).copied().unwrap_or(1.0);
            if lead < 0.0 {
                v.iter().map(|c| -c).collect()
            } else {
                v.clone()
            }
        })
        .collect();
    Ok(SpectralBasis {
        eigenvalues,
        eigvecs,
        n_sine: n,
    })
}

impl SpectralBasis {
    /// Builds the `m`-mode basis for potential `v` from `n` sine modes.
    pub fn build(v: &GridFunction, n: usize, m: usize) -> Result<Self> {
        let spec = SineBasisSpec::new(n)?;
        let b = potential_matrix(v, spec)?;
        solve_eigenbasis(&b, m)
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn sine_modes(&self) -> usize {
        self.n_sine
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.eigvecs[k]
    }

    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigvecs
    }

    /// `φ_k(x) = Σ_j a^k_j √2 sin(jπx)`.
    pub fn eigenfunction_value(&self, k: usize, x: f64) -> f64 {
        if x == 0.0 || x == 1.0 {
            return 0.0;
        }
        self.eigvecs[k]
            .iter()
            .enumerate()
            .map(|(j, a)| a * std::f64::consts::SQRT_2 * ((j + 1) as f64 * PI * x).sin())
            .sum()
    }

    /// Pairs `(k, k+1)` whose eigenvalues are closer than [`DEGENERACY_TOL`].
    pub fn degenerate_pairs(&self) -> Vec<(usize, usize)> {
        self.eigenvalues
            .windows(2)
            .enumerate()
            .filter(|(_, w)| (w[1] - w[0]).abs() < DEGENERACY_TOL)
            .map(|(k, _)| (k, k + 1))
            .collect()
    }
}
