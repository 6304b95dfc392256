//! Small dense real-matrix kernel.
//!
//! Everything here is sized for the follower counts this crate supports
//! (n <= 64). The Lyapunov solver works on the n^2 x n^2 vectorized system
//! directly, and every definiteness query goes through the cyclic Jacobi
//! eigensolver so that margins are always available.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Errors raised by the dense kernel.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular (pivot {pivot:e} below {threshold:e})")]
    Singular { pivot: f64, threshold: f64 },
    #[error("matrix is not positive definite (lambda_min = {lambda_min:e})")]
    NotPositiveDefinite { lambda_min: f64 },
    #[error("Jacobi iteration did not converge for matrix `{label}` after {sweeps} sweeps")]
    NoConvergence { label: String, sweeps: usize },
    #[error("non-finite entry in matrix")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended for
    /// literals in tests and fixtures.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged matrix literal");
            data.extend_from_slice(row.as_ref());
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `y = self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Quadratic form `x^T self x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    /// `(self + self^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        self.add(&self.transpose()).scale(0.5)
    }

    /// Relative asymmetry `||S - S^T||_F / ||S||_F` (0 for the zero matrix).
    pub fn asymmetry(&self) -> f64 {
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        self.sub(&self.transpose()).frobenius_norm() / norm
    }

    /// Assembles a 2x2 block matrix from equally shaped blocks.
    pub fn block2(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        let (r, k) = (a.rows, a.cols);
        for m in [b, c, d] {
            assert_eq!((m.rows, m.cols), (r, k), "block shape mismatch");
        }
        let mut out = Self::zeros(2 * r, 2 * k);
        for i in 0..r {
            for j in 0..k {
                out[(i, j)] = a[(i, j)];
                out[(i, j + k)] = b[(i, j)];
                out[(i + r, j)] = c[(i, j)];
                out[(i + r, j + k)] = d[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Solves `a x = rhs` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(format!(
            "solve_linear needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    if rhs.len() != n {
        return Err(LinalgError::Dimension(format!(
            "rhs has length {}, expected {n}",
            rhs.len()
        )));
    }
    let threshold = 1e-13 * a.max_abs();
    let mut m = a.data.clone();
    let mut x = rhs.to_vec();

    for col in 0..n {
        let (piv_row, piv_val) =
            (col..n)
                .map(|r| (r, m[r * n + col].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if piv_val < threshold || piv_val == 0.0 {
            return Err(LinalgError::Singular {
                pivot: piv_val,
                threshold,
            });
        }
        if piv_row != col {
            for j in 0..n {
                m.swap(col * n + j, piv_row * n + j);
            }
            x.swap(col, piv_row);
        }
        let pivot = m[col * n + col];
        for r in col + 1..n {
            let factor = m[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            m[r * n + col] = 0.0;
            for j in col + 1..n {
                m[r * n + j] -= factor * m[col * n + j];
            }
            x[r] -= factor * x[col];
        }
    }
    for r in (0..n).rev() {
        let mut acc = x[r];
        for j in r + 1..n {
            acc -= m[r * n + j] * x[j];
        }
        x[r] = acc / m[r * n + r];
    }
    Ok(x)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows * b.rows, a.cols * b.cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out[(i * b.rows + k, j * b.cols + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Positive definite solution of `M^T P + P M = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSolution {
    pub p: Matrix,
    /// Frobenius norm of `M^T P + P M - I`.
    pub residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Solves `M^T P + P M = I` through the vectorized Kronecker system
/// `(I ⊗ M^T + M^T ⊗ I) vec(P) = vec(I)`.
pub fn solve_lyapunov(m: &Matrix) -> Result<LyapunovSolution> {
    if !m.is_square() {
        return Err(LinalgError::Dimension(format!(
            "Lyapunov equation needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    let mt = m.transpose();
    let eye = Matrix::identity(n);
    let system = kron(&eye, &mt).add(&kron(&mt, &eye));
    // vec() stacks columns; the identity is its own transpose so only the
    // unpacking order matters.
    let rhs: Vec<f64> = (0..n * n)
        .map(|k| if k % n == k / n { 1.0 } else { 0.0 })
        .collect();
    let vec_p = solve_linear(&system, &rhs)?;
    let mut p = Matrix::zeros(n, n);
    for col in 0..n {
        for row in 0..n {
            p[(row, col)] = vec_p[col * n + row];
        }
    }
    let p = p.symmetrized();
    let residual = mt.matmul(&p).add(&p.matmul(m)).sub(&eye).frobenius_norm();
    let (lambda_min, lambda_max) = sym_eig_extremes_labeled(&p, "P")?;
    if lambda_min <= 0.0 {
        return Err(LinalgError::NotPositiveDefinite { lambda_min });
    }
    Ok(LyapunovSolution {
        p,
        residual,
        lambda_min,
        lambda_max,
    })
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Full spectrum of a symmetric matrix by cyclic Jacobi rotations, sorted
/// ascending. The input is symmetrized first.
pub fn sym_eigenvalues(s: &Matrix, label: &str) -> Result<Vec<f64>> {
    if !s.is_square() {
        return Err(LinalgError::Dimension(format!(
            "eigenvalues of a non-square {}x{} matrix",
            s.rows, s.cols
        )));
    }
    if s.data.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let n = s.rows;
    let mut a = s.symmetrized();
    let scale = a.frobenius_norm();
    if n <= 1 || scale == 0.0 {
        let mut d = a.diag();
        d.sort_by(f64::total_cmp);
        return Ok(d);
    }

    let off = |a: &Matrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[(i, j)] * a[(i, j)];
                }
            }
        }
        acc.sqrt()
    };

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
            }
        }
    }
    if !converged && off(&a) > 1e-12 * scale {
        return Err(LinalgError::NoConvergence {
            label: label.to_string(),
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }
    let mut d = a.diag();
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// `(lambda_min, lambda_max)` of a symmetric matrix.
pub fn sym_eig_extremes(s: &Matrix) -> Result<(f64, f64)> {
    sym_eig_extremes_labeled(s, "S")
}

pub fn sym_eig_extremes_labeled(s: &Matrix, label: &str) -> Result<(f64, f64)> {
    let eig = sym_eigenvalues(s, label)?;
    match (eig.first(), eig.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(LinalgError::Dimension("empty matrix".into())),
    }
}

/// Relative definiteness threshold shared by every positive-definite query.
pub fn pd_threshold(lambda_max: f64) -> f64 {
    1e-10 * lambda_max.max(1.0)
}

/// `lambda_min(S) > 1e-10 * max(1, lambda_max(S))`.
pub fn is_positive_definite(s: &Matrix) -> Result<bool> {
    let (lo, hi) = sym_eig_extremes(s)?;
    Ok(lo > pd_threshold(hi))
}
