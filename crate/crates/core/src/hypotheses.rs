//! Truncation-level check of the coupling and non-resonance conditions that
//! make the ground-state orbit the only invariant set of the closed loop.
//!
//! Everything here is a necessary-condition check on the first `M` modes; it
//! says nothing about the modes beyond the truncation.

use std::fmt;

use serde::Serialize;

use crate::operators::ControlOperators;

pub const DEFAULT_COUPLING_TOL: f64 = 1e-8;
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-6;

/// A quadruple `(1, k, p, q)` with `λ_1 - λ_k ≈ λ_p - λ_q`, modes one-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resonance {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub modes: usize,
    pub coupling_tol: f64,
    pub resonance_tol: f64,
    /// `c1[i] = ⟨Q_1 φ_1, φ_{i+2}⟩`
    pub c1: Vec<f64>,
    /// `c2[i] = ⟨Q_2 φ_1, φ_{i+2}⟩`
    pub c2: Vec<f64>,
    /// One-based indices `k ≥ 2` not coupled to the ground state by `Q_1`.
    pub j0: Vec<usize>,
    pub j_neq0: Vec<usize>,
    /// Members of `J0` that `Q_2` does not couple either.
    pub uncoupled: Vec<usize>,
    pub resonances: Vec<Resonance>,
}

impl CouplingReport {
    pub fn coupling_ok(&self) -> bool {
        self.uncoupled.is_empty()
    }

    pub fn resonance_ok(&self) -> bool {
        self.resonances.is_empty()
    }

    pub fn all_ok(&self) -> bool {
        self.coupling_ok() && self.resonance_ok()
    }
}

/// First rows of `H_1` and `H_2`, excluding the diagonal entry.
pub fn coupling_coefficients(ops: &ControlOperators) -> (Vec<f64>, Vec<f64>) {
    let m = ops.modes();
    let c1 = (1..m).map(|k| ops.h1[(0, k)]).collect();
    let c2 = (1..m).map(|k| ops.h2[(0, k)]).collect();
    (c1, c2)
}

/// Resonances `|(λ_1 - λ_k) - (λ_p - λ_q)| < tol` with `k ≠ 1` and `{1,k} ≠ {p,q}`.
pub fn resonance_scan(eigenvalues: &[f64], tol: f64) -> Vec<Resonance> {
    let m = eigenvalues.len();
    let mut found = Vec::new();
    if m < 3 {
        return found;
    }
    for k in 2..=m {
        let target = eigenvalues[0] - eigenvalues[k - 1];
        for p in 1..=m {
            for q in 1..=m {
                let same_pair = (p == 1 && q == k) || (p == k && q == 1);
                if same_pair {
                    continue;
                }
                let gap = (target - (eigenvalues[p - 1] - eigenvalues[q - 1])).abs();
                if gap < tol {
                    found.push(Resonance { k, p, q, gap });
                }
            }
        }
    }
    found
}

pub fn check_hypotheses(
    ops: &ControlOperators,
    coupling_tol: f64,
    resonance_tol: f64,
) -> CouplingReport {
    let (c1, c2) = coupling_coefficients(ops);
    let mut j0 = Vec::new();
    let mut j_neq0 = Vec::new();
    let mut uncoupled = Vec::new();
    for (i, (&a, &b)) in c1.iter().zip(&c2).enumerate() {
        let k = i + 2;
        if a.abs() < coupling_tol {
            j0.push(k);
            if b.abs() < coupling_tol {
                uncoupled.push(k);
            }
        } else {
            j_neq0.push(k);
        }
    }
    CouplingReport {
        modes: ops.modes(),
        coupling_tol,
        resonance_tol,
        c1,
        c2,
        j0,
        j_neq0,
        uncoupled,
        resonances: resonance_scan(&ops.h0, resonance_tol),
    }
}

impl fmt::Display for CouplingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Coupling/resonance check on the first {} modes (necessary conditions at this truncation only)",
            self.modes
        )?;
        writeln!(f, "  k   <Q1 phi_1, phi_k>       <Q2 phi_1, phi_k>")?;
        for (i, (a, b)) in self.c1.iter().zip(&self.c2).enumerate() {
            writeln!(f, "  {:<3} {:>22.15e} {:>22.15e}", i + 2, a, b)?;
        }
        writeln!(f, "  J0 (tol {:e}): {:?}   |J0| = {}", self.coupling_tol, self.j0, self.j0.len())?;
        writeln!(f, "  J!=0: {:?}", self.j_neq0)?;
        if self.coupling_ok() {
            writeln!(f, "  coupling: every excited mode reached by Q1 or Q2")?;
        } else {
            writeln!(f, "  coupling: VIOLATED for k in {:?}", self.uncoupled)?;
        }
        if self.resonance_ok() {
            writeln!(f, "  resonance (tol {:e}): none found", self.resonance_tol)?;
        } else {
            writeln!(
                f,
                "  resonance (tol {:e}): {} violating quadruple(s)",
                self.resonance_tol,
                self.resonances.len()
            )?;
            for r in &self.resonances {
                writeln!(
                    f,
                    "    lambda_1 - lambda_{} = lambda_{} - lambda_{}  (gap {:e})",
                    r.k, r.p, r.q, r.gap
                )?;
            }
        }
        Ok(())
    }
}
