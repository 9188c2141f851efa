//! Small dense linear algebra: real symmetric matrices, a cyclic Jacobi
//! eigensolver and the complex vector helpers used by the integrators.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense square real matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row vectors. Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix rows must all have length {n}");
            data.extend_from_slice(r);
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest |A_ij - A_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn mul_cvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        self.mul_cvec_into(x, &mut out);
        out
    }

    pub fn mul_cvec_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(x.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(x) {
                acc += b * a;
            }
            *o = acc;
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Matrix, b: f64) -> Matrix {
        assert_eq!(self.n, other.n);
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    /// `Pᵀ self P` for a rectangular `P` given as columns of length `self.dim()`.
    pub fn congruence(&self, columns: &[Vec<f64>]) -> Matrix {
        let m = columns.len();
        let images: Vec<Vec<f64>> = columns.iter().map(|c| self.mul_vec(c)).collect();
        let mut out = Matrix::zeros(m);
        for i in 0..m {
            for j in i..m {
                let v = dot(&columns[i], &images[j]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cnorm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian inner product `Σ a_k conj(b_k)`, linear in the first slot.
pub fn cinner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver for real symmetric matrices.
///
/// Rotations use the Rutishauser formulation, which keeps the accumulated
/// eigenvector matrix orthogonal to working precision. Iteration stops once
/// the off-diagonal mass is negligible against the diagonal.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.dim();
    let mut m = a.clone();
    // Symmetrize in case of last-bit asymmetry from quadrature.
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();

    let off = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += m[(i, j)] * m[(i, j)];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = scale == 0.0 || n < 2;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Element too small to move either diagonal entry.
                let g = 100.0 * apq.abs();
                if sweeps > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = m[(r, p)];
                        let arq = m[(r, q)];
                        let new_rp = arp - s * (arq + tau * arp);
                        let new_rq = arq + s * (arp - tau * arq);
                        m[(r, p)] = new_rp;
                        m[(p, r)] = new_rp;
                        m[(r, q)] = new_rq;
                        m[(q, r)] = new_rq;
                    }
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp - s * (vrq + tau * vrp);
                    v[(r, q)] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
        converged = off(&m) <= f64::EPSILON * 0.5 * scale;
    }
    if !converged {
        return Err(Error::Eigensolver {
            sweeps,
            off_norm: off(&m),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&k| m[(k, k)]).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|r| v[(r, k)]).collect())
        .collect();
    Ok(SymmetricEigen { values, vectors })
}

/// Applies `exp(-i τ A)` to `x` given the eigen-decomposition of `A`.
pub fn apply_unitary_exp(eig: &SymmetricEigen, tau: f64, x: &mut [Complex64]) {
    let n = x.len();
    let mut coeffs = [Complex64::new(0.0, 0.0); 64];
    let mut heap;
    let proj: &mut [Complex64] = if n <= coeffs.len() {
        &mut coeffs[..n]
    } else {
        heap = vec![Complex64::new(0.0, 0.0); n];
        &mut heap
    };
    for (k, vk) in eig.vectors.iter().enumerate() {
        let mut c = Complex64::new(0.0, 0.0);
        for (a, z) in vk.iter().zip(x.iter()) {
            c += z * a;
        }
        let phase = Complex64::from_polar(1.0, -tau * eig.values[k]);
        proj[k] = c * phase;
    }
    for z in x.iter_mut() {
        *z = Complex64::new(0.0, 0.0);
    }
    for (k, vk) in eig.vectors.iter().enumerate() {
        for (a, z) in vk.iter().zip(x.iter_mut()) {
            *z += proj[k] * a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &Matrix, eig: &SymmetricEigen) -> f64 {
        eig.values
            .iter()
            .zip(&eig.vectors)
            .map(|(&l, v)| {
                let av = a.mul_vec(v);
                av.iter()
                    .zip(v)
                    .map(|(x, y)| (x - l * y).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn diagonal_matrix_is_returned_sorted() {
        let a = Matrix::from_diag(&[3.0, -1.0, 2.0]);
        let eig = symmetric_eigen(&a).unwrap();
        assert_eq!(eig.values, vec![-1.0, 2.0, 3.0]);
        assert_eq!(eig.vectors[0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let eig = symmetric_eigen(&a).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-15);
        assert!((eig.values[1] - 3.0).abs() < 1e-15);
        assert!(residual(&a, &eig) < 1e-14);
    }

    #[test]
    fn hilbert_matrix_residual_and_orthogonality() {
        let n = 8;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| 1.0 / (i + j + 1) as f64).collect())
            .collect();
        let a = Matrix::from_rows(&rows);
        let eig = symmetric_eigen(&a).unwrap();
        assert!(residual(&a, &eig) < 1e-14 * a.frobenius_norm());
        for i in 0..n {
            for j in 0..n {
                let d = dot(&eig.vectors[i], &eig.vectors[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-13);
            }
        }
        let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
        assert!((eig.values.iter().sum::<f64>() - trace).abs() < 1e-13);
    }

    #[test]
    fn zero_matrix() {
        let eig = symmetric_eigen(&Matrix::zeros(4)).unwrap();
        assert!(eig.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unitary_exp_preserves_norm_and_matches_scalar_case() {
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, -2.0]]);
        let eig = symmetric_eigen(&a).unwrap();
        let mut x = vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        apply_unitary_exp(&eig, 0.37, &mut x);
        assert!((cnorm(&x) - 1.0).abs() < 1e-15);

        let d = Matrix::from_diag(&[2.0]);
        let eig = symmetric_eigen(&d).unwrap();
        let mut y = vec![Complex64::new(1.0, 0.0)];
        apply_unitary_exp(&eig, 0.5, &mut y);
        assert!((y[0] - Complex64::from_polar(1.0, -1.0)).norm() < 1e-15);
    }
}
