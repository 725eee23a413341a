//! Dense real linear algebra kernel: SPD solves via Cholesky, one-sided
//! Jacobi SVD with relative truncation, and matrix products.
//!
//! Everything is `f64`. Matrices are row-major. All routines are pure
//! functions of their inputs and safe to call concurrently.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count mismatch");
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = values[i];
        }
        m
    }

    pub fn column(values: &[f64]) -> Self {
        Self::from_rows(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * other` using a blocked gemm.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                other.cols,
                1.0,
                self.entries.as_ptr(),
                self.cols as isize,
                1,
                other.entries.as_ptr(),
                other.cols as isize,
                1,
                0.0,
                out.entries.as_mut_ptr(),
                other.cols as isize,
                1,
            );
        }
        out
    }

    /// Gram product `selfᵀ * self`.
    pub fn gram(&self) -> DenseMatrix {
        self.transpose().matmul(self)
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut s = 0.0;
            for (a, b) in row.iter().zip(x) {
                s += a * b;
            }
            y[i] = s;
        }
        y
    }

    pub fn scale(&self, c: f64) -> DenseMatrix {
        let mut out = self.clone();
        for v in &mut out.entries {
            *v *= c;
        }
        out
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (v, w) in out.entries.iter_mut().zip(&other.entries) {
            *v += w;
        }
        out
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (v, w) in out.entries.iter_mut().zip(&other.entries) {
            *v += c * w;
        }
        out
    }

    /// `(A + Aᵀ)/2`, used after Monte Carlo assembly.
    pub fn symmetrized(&self) -> DenseMatrix {
        assert_eq!(self.rows, self.cols);
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self[(i, j)] + self[(j, i)])
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.entries[i * self.cols + j]
    }
}

/// Cholesky factorization `A = LLᵀ` of an SPD matrix, reusable across solves.
///
/// No pivoting; a pivot below `1e-14` of its own diagonal signals a degenerate basis
/// and fails with [`LinalgError::NotPositiveDefinite`].
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    // lower triangle, row-major full storage
    l: Vec<f64>,
}

impl CholeskyFactor {
    pub fn new(a: &DenseMatrix) -> Result<Self, LinalgError> {
        assert_eq!(a.rows, a.cols, "Cholesky needs a square matrix");
        let n = a.rows;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    // a pivot that lost ~14 digits against its own diagonal
                    // signals a numerically dependent direction
                    if s <= 1e-14 * a[(i, i)].abs() {
                        return Err(LinalgError::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A x = b` for one right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        // L y = b
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    /// Solve `L y = b` with the lower-triangular factor alone.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    /// Solve `A X = B` column by column.
    pub fn solve(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(b.rows, self.n);
        let mut out = DenseMatrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let col: Vec<f64> = (0..b.rows).map(|i| b[(i, j)]).collect();
            let x = self.solve_vec(&col);
            for i in 0..b.rows {
                out[(i, j)] = x[i];
            }
        }
        out
    }
}

/// Solve `A X = B` with `A` symmetric positive definite.
pub fn spd_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let f = CholeskyFactor::new(a)?;
    Ok(f.solve(b))
}

/// Truncated SVD result; singular values sorted non-increasing.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub left_vectors: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub right_vectors: DenseMatrix,
    pub retained_rank: usize,
}

/// One-sided Jacobi SVD with relative truncation.
///
/// Rotates column pairs of a working copy of `A` until all columns are
/// mutually orthogonal; column norms become the singular values. Retains
/// the components with `σ_i >= rel_tol * σ_max`.
pub fn truncated_svd(a: &DenseMatrix, rel_tol: f64) -> Result<SvdResult, LinalgError> {
    if a.rows == 0 || a.cols == 0 {
        return Err(LinalgError::EmptyMatrix);
    }
    assert!(rel_tol > 0.0 && rel_tol < 1.0, "rel_tol must be in (0, 1)");
    let m = a.rows;
    let n = a.cols;

    // column-major working copies of U-scaled columns and V
    let mut u: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let eps = 1e-15;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    app += u[p][i] * u[p][i];
                    aqq += u[q][i] * u[q][i];
                    apq += u[p][i] * u[q][i];
                }
                if apq.abs() <= eps * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                off = off.max(apq.abs() / (app * aqq).sqrt().max(f64::MIN_POSITIVE));
                // Jacobi rotation zeroing the (p,q) inner product
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let up = u[p][i];
                    let uq = u[q][i];
                    u[p][i] = c * up - s * uq;
                    u[q][i] = s * up + c * uq;
                }
                for i in 0..n {
                    let vp = v[p][i];
                    let vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if off < 1e-14 {
            break;
        }
    }

    // singular values = column norms; sort descending
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = u
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let sigma_max = norms[order[0]];
    let threshold = rel_tol * sigma_max;
    let retained_rank = order.iter().filter(|&&j| norms[j] >= threshold).count();

    let singular_values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let left_vectors = DenseMatrix::from_fn(m, n, |i, jj| {
        let j = order[jj];
        if norms[j] > 0.0 {
            u[j][i] / norms[j]
        } else {
            0.0
        }
    });
    let right_vectors = DenseMatrix::from_fn(n, n, |i, jj| v[order[jj]][i]);

    Ok(SvdResult {
        left_vectors,
        singular_values,
        right_vectors,
        retained_rank,
    })
}
