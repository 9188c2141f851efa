//! Flat `key = value` experiment configs and the built-in presets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::dynamics::{FeedbackSampling, IntegratorSpec, Method};
use crate::error::{Error, Result};
use crate::operators::{Damping, ModeState};
use crate::spectral::GridFunction;

/// Environment variable that relocates relative output paths.
pub const OUTPUT_DIR_ENV: &str = "QSTAB_OUTPUT_DIR";

pub const DEFAULT_GAIN: f64 = 0.05;
pub const DEFAULT_GAMMA_TARGET: f64 = 0.75;

/// How `γ` is fixed for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSpec {
    Explicit(f64),
    /// Solve `L(ψ⁰) = target` for `γ`.
    Target(f64),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub potential: GridFunction,
    pub q1: GridFunction,
    pub q2: GridFunction,
    pub n_sine: usize,
    pub modes: usize,
    /// Leading mode coefficients; padded with zeros and normalized on use.
    pub initial: Vec<Complex64>,
    pub k: f64,
    pub gamma: GammaSpec,
    pub damping: Damping,
    pub method: Method,
    pub sampling: FeedbackSampling,
    pub dt: f64,
    /// When set, `dt = dt_ratio * epsilon` (used by sweeps).
    pub dt_ratio: Option<f64>,
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub t_final: f64,
    pub stride: u64,
    /// When set, overrides `stride` with `round(record_interval / dt)`.
    pub record_interval: Option<f64>,
    pub s: f64,
    pub output: PathBuf,
    pub monitors: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            potential: GridFunction::HarmonicCentered,
            q1: GridFunction::X2,
            q2: GridFunction::X,
            n_sine: 50,
            modes: 5,
            initial: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)],
            k: DEFAULT_GAIN,
            gamma: GammaSpec::Target(DEFAULT_GAMMA_TARGET),
            damping: Damping::Clip,
            method: Method::Strang,
            sampling: FeedbackSampling::Midpoint,
            dt: 1e-3,
            dt_ratio: None,
            epsilon: 1e-3,
            epsilons: Vec::new(),
            t_final: 1000.0,
            stride: 100,
            record_interval: None,
            s: 1.8,
            output: PathBuf::from("trajectory.csv"),
            monitors: true,
        }
    }
}

pub const PRESETS: [&str; 5] = ["fig1", "fig2", "fig3-4", "fig5-6", "hcn"];

/// Gain used by every preset.
pub const PRESET_GAIN: f64 = 0.2;

fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        // Validation case: V = (x-1/2)², Q1 = x², Q2 = x, ψ⁰ = (φ1 + iφ2)/√2.
        "fig1" => {
            "potential = harmonic_centered\nq1 = x2\nq2 = x\nn = 50\nm = 5\n\
             initial = 1, i\nk = 0.2\ngamma_target = 0.75\ng_kind = clip\n\
             method = strang\ndt = 1e-3\nepsilon = 1e-3\nt_final = 1000\n\
             record_interval = 0.1\ns = 1.8\n"
        }
        // Three-mode start, slower stabilization.
        "fig2" => {
            "potential = harmonic_centered\nq1 = x2\nq2 = x\nn = 50\nm = 5\n\
             initial = 1, 1, i\nk = 0.2\ngamma_target = 0.75\ng_kind = clip\n\
             method = strang\ndt = 1e-3\nepsilon = 1e-3\nt_final = 5000\n\
             record_interval = 0.1\ns = 1.8\n"
        }
        // ε sweep on the validation operators with dt = ε, T = 500.
        "fig3-4" => {
            "potential = harmonic_centered\nq1 = x2\nq2 = x\nn = 50\nm = 5\n\
             initial = 1, i\nk = 0.2\ngamma_target = 0.75\ng_kind = clip\n\
             method = strang\ndt_ratio = 1\nepsilon = 1e-3\nepsilons = 1e-3, 1e-4\n\
             t_final = 500\nrecord_interval = 0.1\ns = 1.8\n"
        }
        "fig5-6" => {
            "potential = harmonic_centered\nq1 = cosx\nq2 = cos2x\nn = 50\nm = 5\n\
             initial = 1, i\nk = 0.2\ngamma_target = 0.75\ng_kind = clip\n\
             method = strang\ndt_ratio = 1\nepsilon = 1e-3\nepsilons = 1e-3, 1e-4\n\
             t_final = 1000\nrecord_interval = 0.1\ns = 1.8\n"
        }
        // Single HCN-like run (dipole cos x, polarizability cos 2x).
        "hcn" => {
            "potential = harmonic_centered\nq1 = cosx\nq2 = cos2x\nn = 50\nm = 5\n\
             initial = 1, i\nk = 0.2\ngamma_target = 0.75\ng_kind = clip\n\
             method = strang\ndt = 1e-3\nepsilon = 1e-3\nt_final = 1000\n\
             record_interval = 0.1\ns = 1.8\n"
        }
        _ => return None,
    })
}

/// Parses `a`, `a+bi`, `a-bi`, `bi`, `i`, `-i`.
pub fn parse_complex(token: &str) -> Result<Complex64> {
    let t: String = token.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::Config(format!("cannot parse complex number {token:?}"));
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&p| (bytes[p] == b'+' || bytes[p] == b'-') && !matches!(bytes[p - 1], b'e' | b'E'));
    let imag = |s: &str| -> Result<f64> {
        match s {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => s.parse::<f64>().map_err(|_| bad()),
        }
    };
    match split {
        Some(p) => {
            let re = body[..p].parse::<f64>().map_err(|_| bad())?;
            Ok(Complex64::new(re, imag(&body[p..])?))
        }
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

fn format_complex(z: &Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else {
        format!("{}{:+}i", z.re, z.im)
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {v:?} as a number ({e})")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse::<usize>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {v:?} as a count ({e})")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_f64(key, t))
        .collect()
}

/// Splits config text into ordered `(key, value)` pairs.
fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| {
            Error::Config(format!("unknown preset {name:?}; known: {}", PRESETS.join(", ")))
        })?;
        let mut cfg = Self::default();
        for (k, v) in parse_pairs(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.name = name.to_string();
        cfg.output = PathBuf::from(format!("{name}.csv"));
        Ok(cfg)
    }

    /// Parses config text; a `preset` key is applied before all other keys.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mut cfg = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, name)) => Self::preset(name)?,
            None => Self::default(),
        };
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file, or a preset when `source` names one and no such file exists.
    pub fn load(source: &str) -> Result<Self> {
        let path = Path::new(source);
        if !path.exists() {
            if let Some(name) = source.strip_prefix("preset:").or(Some(source)) {
                if preset_text(name).is_some() {
                    let cfg = Self::preset(name)?;
                    cfg.validate()?;
                    return Ok(cfg);
                }
            }
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.name == "custom" {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                cfg.name = stem.to_string();
            }
        }
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "name" => self.name = v.to_string(),
            "potential" | "V" => self.potential = v.parse()?,
            "q1" | "Q1" => self.q1 = v.parse()?,
            "q2" | "Q2" => self.q2 = v.parse()?,
            "n" | "N" => self.n_sine = parse_usize(key, v)?,
            "m" | "M" => self.modes = parse_usize(key, v)?,
            "initial" => {
                self.initial = v
                    .split(',')
                    .map(parse_complex)
                    .collect::<Result<Vec<_>>>()?;
            }
            "k" => self.k = parse_f64(key, v)?,
            "gamma" => self.gamma = GammaSpec::Explicit(parse_f64(key, v)?),
            "gamma_target" => self.gamma = GammaSpec::Target(parse_f64(key, v)?),
            "g_kind" => self.damping = v.parse()?,
            "method" => self.method = v.parse()?,
            "feedback_sampling" => self.sampling = v.parse()?,
            "dt" => {
                self.dt = parse_f64(key, v)?;
                self.dt_ratio = None;
            }
            "dt_ratio" => self.dt_ratio = Some(parse_f64(key, v)?),
            "epsilon" => self.epsilon = parse_f64(key, v)?,
            "epsilons" => self.epsilons = parse_list(key, v)?,
            "t_final" | "T" => self.t_final = parse_f64(key, v)?,
            "stride" => {
                self.stride = v
                    .parse::<u64>()
                    .map_err(|e| Error::Config(format!("stride: {e}")))?;
                self.record_interval = None;
            }
            "record_interval" => self.record_interval = Some(parse_f64(key, v)?),
            "s" => self.s = parse_f64(key, v)?,
            "output" => self.output = PathBuf::from(v),
            "monitors" => {
                self.monitors = match v {
                    "on" | "true" | "1" => true,
                    "off" | "false" | "0" => false,
                    _ => return Err(Error::Config(format!("monitors: expected on/off, got {v:?}"))),
                }
            }
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides such as those given with `--set`.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k, v)?;
        }
        self.validate()
    }

    /// Time step after applying `dt_ratio`.
    pub fn effective_dt(&self) -> f64 {
        match self.dt_ratio {
            Some(r) if self.epsilon > 0.0 => r * self.epsilon,
            _ => self.dt,
        }
    }

    pub fn effective_stride(&self) -> u64 {
        match self.record_interval {
            Some(iv) => ((iv / self.effective_dt()).round() as u64).max(1),
            None => self.stride,
        }
    }

    pub fn integrator(&self) -> Result<IntegratorSpec> {
        Ok(IntegratorSpec::new(self.method, self.effective_dt(), self.epsilon)?
            .with_sampling(self.sampling))
    }

    /// Initial coefficients padded to `M` modes and normalized.
    pub fn initial_state(&self) -> Result<ModeState> {
        if self.initial.len() > self.modes {
            return Err(Error::Config(format!(
                "initial state has {} coefficients but only M = {} modes are retained",
                self.initial.len(),
                self.modes
            )));
        }
        let mut v = self.initial.clone();
        v.resize(self.modes, Complex64::new(0.0, 0.0));
        ModeState::normalized(v)
    }

    /// Copy with `epsilon` replaced (and `dt` following `dt_ratio`).
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut c = self.clone();
        c.epsilon = epsilon;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 || self.modes > self.n_sine {
            return Err(Error::Config(format!(
                "need 1 <= M <= N, got M = {}, N = {}",
                self.modes, self.n_sine
            )));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.effective_stride() == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(self.k > 0.0) {
            return Err(Error::Config(format!("k must be positive, got {}", self.k)));
        }
        match self.gamma {
            GammaSpec::Explicit(g) if !(g > 0.0) => {
                return Err(Error::Config(format!("gamma must be positive, got {g}")))
            }
            GammaSpec::Target(t) if !(t > 0.0 && t < 1.0) => {
                return Err(Error::Config(format!("gamma_target must lie in (0, 1), got {t}")))
            }
            _ => {}
        }
        if !(self.s.is_finite()) {
            return Err(Error::Config("Sobolev order s must be finite".into()));
        }
        if let Some(r) = self.dt_ratio {
            if !(r > 0.0) {
                return Err(Error::Config(format!("dt_ratio must be positive, got {r}")));
            }
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("sweep epsilons must be positive".into()));
        }
        self.integrator()?;
        for &e in &self.epsilons {
            self.with_epsilon(e).integrator()?;
        }
        self.initial_state()?;
        Ok(())
    }

    /// Output path, relocated under `$QSTAB_OUTPUT_DIR` when relative.
    pub fn resolved_output(&self) -> PathBuf {
        resolve_output(&self.output)
    }

    /// Canonical config text; parsing it yields an equivalent config.
    pub fn to_text(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("name", self.name.clone());
        map.insert("potential", self.potential.to_string());
        map.insert("q1", self.q1.to_string());
        map.insert("q2", self.q2.to_string());
        map.insert("n", self.n_sine.to_string());
        map.insert("m", self.modes.to_string());
        map.insert(
            "initial",
            self.initial.iter().map(format_complex).collect::<Vec<_>>().join(", "),
        );
        map.insert("k", self.k.to_string());
        match self.gamma {
            GammaSpec::Explicit(g) => map.insert("gamma", g.to_string()),
            GammaSpec::Target(t) => map.insert("gamma_target", t.to_string()),
        };
        map.insert("g_kind", self.damping.to_string());
        map.insert("method", self.method.to_string());
        map.insert("feedback_sampling", self.sampling.to_string());
        match self.dt_ratio {
            Some(r) => map.insert("dt_ratio", r.to_string()),
            None => map.insert("dt", self.dt.to_string()),
        };
        map.insert("epsilon", self.epsilon.to_string());
        if !self.epsilons.is_empty() {
            map.insert(
                "epsilons",
                self.epsilons.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", "),
            );
        }
        map.insert("t_final", self.t_final.to_string());
        match self.record_interval {
            Some(iv) => map.insert("record_interval", iv.to_string()),
            None => map.insert("stride", self.stride.to_string()),
        };
        map.insert("s", self.s.to_string());
        map.insert("output", self.output.display().to_string());
        map.insert("monitors", if self.monitors { "on" } else { "off" }.into());
        let mut out = String::new();
        for (k, v) in map {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

pub fn resolve_output(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            return PathBuf::from(dir).join(path);
        }
    }
    path.to_path_buf()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        let cases = [
            ("1", (1.0, 0.0)),
            ("i", (0.0, 1.0)),
            ("-i", (0.0, -1.0)),
            ("0.5+0.25i", (0.5, 0.25)),
            ("0.5 - 2i", (0.5, -2.0)),
            ("1e-3+1e-2i", (1e-3, 1e-2)),
            ("-3.5i", (0.0, -3.5)),
            ("2-i", (2.0, -1.0)),
        ];
        for (s, (re, im)) in cases {
            assert_eq!(parse_complex(s).unwrap(), Complex64::new(re, im), "{s}");
        }
        for bad in ["", "abc", "1+2j", "1+xi"] {
            assert!(parse_complex(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn presets_load_and_validate() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.name, name);
        }
        let fig1 = ExperimentConfig::preset("fig1").unwrap();
        assert_eq!((fig1.n_sine, fig1.modes), (50, 5));
        assert_eq!(fig1.effective_stride(), 100);
        assert_eq!(fig1.initial_state().unwrap().len(), 5);
        let sweep = ExperimentConfig::preset("fig3-4").unwrap();
        assert_eq!(sweep.epsilons, vec![1e-3, 1e-4]);
        assert!((sweep.with_epsilon(1e-4).effective_dt() - 1e-4).abs() < 1e-18);
        assert!(ExperimentConfig::preset("fig9").is_err());
    }

    #[test]
    fn text_round_trip() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
            assert_eq!(cfg.to_text(), again.to_text());
        }
    }

    #[test]
    fn preset_with_overrides_and_comments() {
        let text = "# desk-scale validation run\nt_final = 50  # shorter\npreset = fig1\nm = 6\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.t_final, 50.0);
        assert_eq!(cfg.modes, 6);
        assert_eq!(cfg.k, PRESET_GAIN);
    }

    #[test]
    fn validation_errors() {
        let bad = [
            "m = 60\nn = 50",
            "dt = 1e-2\nepsilon = 1e-3",
            "initial = 1, 1, 1, 1, 1, 1",
            "initial = 0",
            "k = -1",
            "gamma_target = 1.5",
            "t_final = 0",
            "frobnicate = 3",
            "no equals sign",
            "potential = sinh",
            "epsilons = 1e-3, -1",
        ];
        for text in bad {
            assert!(
                matches!(ExperimentConfig::parse(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn bare_config_uses_default_gain() {
        let cfg = ExperimentConfig::parse("t_final = 1").unwrap();
        assert_eq!(cfg.k, DEFAULT_GAIN);
        assert_eq!(cfg.gamma, GammaSpec::Target(0.75));
    }
}
