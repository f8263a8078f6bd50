//! Dense plaintext linear algebra used by every role: column statistics,
//! Gram matrices, a cyclic Jacobi eigensolver and the centralized PCA
//! reference.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix must have at least one row and one column (got {rows}x{cols})")]
    EmptyShape { rows: usize, cols: usize },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    LengthMismatch { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("linear system is singular")]
    Singular,
}

/// Row-major dense matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyShape { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::LengthMismatch { rows, cols, len: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { row: i / cols, col: i % cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self, LinalgError> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self, LinalgError> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(LinalgError::Dimension(format!(
                "ragged rows: expected {cols} columns, found {}",
                bad.len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix from a closure over `(row, col)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, LinalgError> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Matrix { rows: self.cols, cols: self.rows, data }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out = &mut data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Matrix::new(self.rows, other.cols, data)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Result<Matrix, LinalgError> {
        Matrix::new(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::Dimension(format!(
                "shape {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Matrix::new(self.rows, self.cols, data)
    }

    /// Concatenates matrices top to bottom.
    pub fn vstack(parts: &[Matrix]) -> Result<Matrix, LinalgError> {
        let cols = parts
            .first()
            .ok_or_else(|| LinalgError::Dimension("nothing to stack".into()))?
            .cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(LinalgError::Dimension(format!(
                    "cannot stack {} columns onto {cols}",
                    p.cols
                )));
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Matrix::new(rows, cols, data)
    }

    /// Rows selected by index, in the order given.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Matrix, LinalgError> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return Err(LinalgError::Dimension(format!("row {i} out of range {}", self.rows)));
            }
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(idx.len(), self.cols, data)
    }

    /// Leading `k` columns.
    pub fn leading_columns(&self, k: usize) -> Result<Matrix, LinalgError> {
        if k == 0 || k > self.cols {
            return Err(LinalgError::Parameter(format!("cannot take {k} of {} columns", self.cols)));
        }
        Matrix::from_fn(self.rows, k, |r, c| self.get(r, c))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff on different shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Eigenvalues in descending order; column `j` of `vectors` pairs with `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Summation whose result depends only on the multiset of terms: the terms
/// are put in a total order and accumulated with Neumaier compensation.
fn order_invariant_sum(terms: &mut [f64]) -> f64 {
    terms.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &t in terms.iter() {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

pub fn column_sums(x: &Matrix) -> Vec<f64> {
    let mut buf = Vec::with_capacity(x.rows);
    (0..x.cols)
        .map(|c| {
            buf.clear();
            buf.extend((0..x.rows).map(|r| x.get(r, c)));
            order_invariant_sum(&mut buf)
        })
        .collect()
}

pub fn column_means(x: &Matrix) -> Vec<f64> {
    let n = x.rows as f64;
    column_sums(x).into_iter().map(|s| s / n).collect()
}

pub fn center_columns(x: &Matrix, mean: &[f64]) -> Result<Matrix, LinalgError> {
    if mean.len() != x.cols {
        return Err(LinalgError::Dimension(format!(
            "mean has length {} but matrix has {} columns",
            mean.len(),
            x.cols
        )));
    }
    Matrix::from_fn(x.rows, x.cols, |r, c| x.get(r, c) - mean[c])
}

/// `XᵀX`, computed on the upper triangle and mirrored so the result is
/// exactly symmetric.
pub fn gram(x: &Matrix) -> Matrix {
    let d = x.cols;
    let mut out = vec![0.0; d * d];
    let mut buf = Vec::with_capacity(x.rows);
    for i in 0..d {
        for j in i..d {
            buf.clear();
            buf.extend((0..x.rows).map(|r| x.get(r, i) * x.get(r, j)));
            let v = order_invariant_sum(&mut buf);
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
    Matrix { rows: d, cols: d, data: out }
}

/// Sample covariance of already-centered data, `XᵀX / (n − 1)` with `n`
/// the global sample count.
pub fn scaled_gram(x: &Matrix, total_rows: usize) -> Result<Matrix, LinalgError> {
    if total_rows < 2 {
        return Err(LinalgError::Parameter(format!(
            "covariance needs at least 2 samples, got {total_rows}"
        )));
    }
    gram(x).scale(1.0 / (total_rows as f64 - 1.0))
}

pub const DEFAULT_MAX_SWEEPS: usize = 100;
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Symmetric eigendecomposition with the default sweep limit.
pub fn jacobi_eigh(c: &Matrix, tol: f64) -> Result<EigenPairs, LinalgError> {
    jacobi_eigh_with(c, tol, DEFAULT_MAX_SWEEPS)
}

/// Cyclic Jacobi rotations. `tol` bounds the accepted off-diagonal norm
/// relative to `‖C‖_F` when the sweep limit is reached.
pub fn jacobi_eigh_with(c: &Matrix, tol: f64, max_sweeps: usize) -> Result<EigenPairs, LinalgError> {
    if !(tol > 0.0) {
        return Err(LinalgError::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = c.rows;
    if c.cols != n {
        return Err(LinalgError::Dimension(format!("eigensolver needs a square matrix, got {n}x{}", c.cols)));
    }
    let fro = c.frobenius_norm();
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (c.get(i, j) - c.get(j, i)).abs();
            if diff > SYMMETRY_TOLERANCE * fro.max(f64::MIN_POSITIVE) {
                return Err(LinalgError::NotSymmetric { row: i, col: j, diff });
            }
        }
    }

    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (c.get(i, j) + c.get(j, i))).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();

    let off_norm = |a: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for sweep in 0..max_sweeps {
        let off = off_norm(&a);
        if off == 0.0 || off <= f64::EPSILON * fro {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let g = 100.0 * apq.abs();
                // Negligible against both diagonal entries: drop it.
                if sweep > 3 && a[p][p].abs() + g == a[p][p].abs() && a[q][q].abs() + g == a[q][q].abs() {
                    a[p][q] = 0.0;
                    a[q][p] = 0.0;
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = cos * akp - sin * akq;
                    row[q] = sin * akp + cos * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = cos * apk - sin * aqk;
                    a[q][k] = sin * apk + cos * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = cos * vkp - sin * vkq;
                    row[q] = sin * vkp + cos * vkq;
                }
            }
        }
    }
    if !converged {
        let off = off_norm(&a);
        if off > tol * fro {
            return Err(LinalgError::NoConvergence { sweeps: max_sweeps, off_norm: off });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable: equal eigenvalues keep the rotation output order.
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap_or(Ordering::Equal));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[r][order[c]])?;
    Ok(EigenPairs { values, vectors })
}

/// Flips the sign of `col` so its largest-magnitude entry is positive
/// (first such entry on ties).
pub fn canonicalize_sign(col: &mut [f64]) {
    let mut best = 0;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Transfer matrix: the eigenvectors of the `k` largest eigenvalues as
/// sign-canonical columns.
pub fn top_k_transfer(pairs: &EigenPairs, k: usize) -> Result<Matrix, LinalgError> {
    let d = pairs.vectors.rows;
    if k == 0 || k >= d {
        return Err(LinalgError::Parameter(format!("k must satisfy 1 <= k < {d}, got {k}")));
    }
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| pairs.vectors.column(j)).collect();
    cols.iter_mut().for_each(|c| canonicalize_sign(c));
    Matrix::from_fn(d, k, |r, c| cols[c][r])
}

pub fn project(x: &Matrix, t: &Matrix) -> Result<Matrix, LinalgError> {
    x.matmul(t)
}

/// Result of plaintext PCA on pooled data.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub eigen: EigenPairs,
    pub transfer: Matrix,
    pub reduced: Matrix,
}

pub const EIGEN_TOLERANCE: f64 = 1e-10;

/// Reference PCA on pooled plaintext rows.
pub fn centralized_pca(x: &Matrix, k: usize) -> Result<PcaFit, LinalgError> {
    if x.rows < 2 {
        return Err(LinalgError::Parameter(format!("PCA needs at least 2 rows, got {}", x.rows)));
    }
    if k == 0 || k >= x.cols {
        return Err(LinalgError::Parameter(format!("k must satisfy 1 <= k < {}, got {k}", x.cols)));
    }
    let mean = column_means(x);
    let centered = center_columns(x, &mean)?;
    let covariance = scaled_gram(&centered, x.rows)?;
    let eigen = jacobi_eigh(&covariance, EIGEN_TOLERANCE)?;
    let transfer = top_k_transfer(&eigen, k)?;
    let reduced = project(&centered, &transfer)?;
    Ok(PcaFit { mean, covariance, eigen, transfer, reduced })
}

/// Sine of the largest principal angle between the column spaces of two
/// matrices with orthonormal columns: `‖(I − AAᵀ)B‖₂`.
pub fn max_principal_angle_sin(a: &Matrix, b: &Matrix) -> Result<f64, LinalgError> {
    if a.rows != b.rows {
        return Err(LinalgError::Dimension(format!("{} vs {} rows", a.rows, b.rows)));
    }
    let coeffs = a.transpose().matmul(b)?;
    let residual = b.sub(&a.matmul(&coeffs)?)?;
    let rtr = residual.transpose().matmul(&residual)?;
    let sym = Matrix::from_fn(rtr.rows, rtr.cols, |i, j| 0.5 * (rtr.get(i, j) + rtr.get(j, i)))?;
    let eig = jacobi_eigh(&sym, EIGEN_TOLERANCE)?;
    Ok(eig.values[0].max(0.0).sqrt().min(1.0))
}

/// Largest principal angle in radians.
pub fn max_principal_angle(a: &Matrix, b: &Matrix) -> Result<f64, LinalgError> {
    Ok(max_principal_angle_sin(a, b)?.asin())
}

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return Err(LinalgError::Dimension(format!(
            "system {}x{} with rhs of length {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(LinalgError::Singular);
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}
