//! Dense real matrix arithmetic, inversion, conditioning and the seeded
//! random matrices the morphing pipeline is built on.
//!
//! Everything is plain row-major `f64`. Sizes stay at desk scale (a few
//! thousand at most), so the algorithms are the classic dense ones:
//! Gaussian elimination with scaled partial pivoting for solves and
//! inverses, and an explicit-inverse 1-norm condition number.

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Relative pivot tolerance for singularity detection: a pivot is rejected
/// when its magnitude falls below `PIVOT_REL_TOL` times the max-norm of the
/// row it came from.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Default conditioning gate for randomly generated invertible matrices.
pub const DEFAULT_COND_MAX: f64 = 1e6;

/// Rejection budget for [`random_invertible`].
pub const MAX_SAMPLE_RETRIES: usize = 100;

/// Dense row-major matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a row-major buffer, validating length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "buffer length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry at flat index {bad} is {}",
                data[bad]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from nested row slices (test and example convenience).
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::DimensionMismatch("no rows".into()));
        }
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
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

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Row-major backing slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Matrix 1-norm (maximum absolute column sum).
    pub fn norm1(&self) -> f64 {
        let mut best = 0.0f64;
        for c in 0..self.cols {
            let s: f64 = (0..self.rows).map(|r| self.get(r, c).abs()).sum();
            best = best.max(s);
        }
        best
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Entry-wise scale.
    pub fn scaled(&self, factor: f64) -> Matrix {
        let data = self.data.iter().map(|x| x * factor).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Entry-wise difference; shapes must agree.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} - {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

/// Dense row vector of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct RowVector {
    data: Vec<f64>,
}

impl RowVector {
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::DimensionMismatch("empty row vector".into()));
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "vector entry {bad} is {}",
                data[bad]
            )));
        }
        Ok(Self { data })
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "row vector length must be positive");
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `self · m`, a 1×cols product.
    pub fn mul_matrix(&self, m: &Matrix) -> Result<RowVector> {
        if self.len() != m.rows() {
            return Err(Error::DimensionMismatch(format!(
                "row of length {} times {}x{} matrix",
                self.len(),
                m.rows(),
                m.cols()
            )));
        }
        let mut out = vec![0.0; m.cols()];
        // Accumulate row-by-row so each output element sums k = 0..rows in order.
        for (k, &x) in self.data.iter().enumerate() {
            let row = m.row(k);
            for (o, &v) in out.iter_mut().zip(row) {
                *o += x * v;
            }
        }
        RowVector::from_vec(out)
    }
}

/// Standard real matrix product.
///
/// The accumulation over the inner dimension runs left-to-right for every
/// output element, so repeated runs produce identical bits.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} times {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (n, k_dim, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let a_row = a.row(i);
        let out_row = &mut out.data[i * m..(i + 1) * m];
        for (k, &aik) in a_row.iter().enumerate().take(k_dim) {
            let b_row = b.row(k);
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// LU factorization with scaled partial pivoting, stored in-place.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

fn lu_factor(a: &Matrix) -> Result<Lu> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "square matrix required, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let mut lu = a.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    // Row scales from the original matrix drive both pivot selection and the
    // relative singularity test.
    let mut scale = vec![0.0f64; n];
    for r in 0..n {
        let s = a.row(r).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if s == 0.0 {
            return Err(Error::SingularMatrix { col: 0, pivot: 0.0 });
        }
        scale[r] = s;
    }

    for col in 0..n {
        // Pick the row with the largest scaled pivot.
        let mut best_row = col;
        let mut best_val = lu[perm[col] * n + col].abs() / scale[perm[col]];
        for r in (col + 1)..n {
            let v = lu[perm[r] * n + col].abs() / scale[perm[r]];
            if v > best_val {
                best_val = v;
                best_row = r;
            }
        }
        perm.swap(col, best_row);
        let prow = perm[col];
        let pivot = lu[prow * n + col];
        if pivot.abs() < PIVOT_REL_TOL * scale[prow] {
            return Err(Error::SingularMatrix { col, pivot });
        }
        for r in (col + 1)..n {
            let row = perm[r];
            let factor = lu[row * n + col] / pivot;
            lu[row * n + col] = factor;
            if factor != 0.0 {
                let (p_start, r_start) = (prow * n, row * n);
                for c in (col + 1)..n {
                    lu[r_start + c] -= factor * lu[p_start + c];
                }
            }
        }
    }
    Ok(Lu { n, lu, perm })
}

impl Lu {
    /// Solve `A x = b` for a single right-hand side.
    fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = self.perm[i];
            let mut s = b[row];
            for (j, yj) in y.iter().enumerate().take(i) {
                s -= self.lu[row * n + j] * yj;
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let row = self.perm[i];
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= self.lu[row * n + j] * y[j];
            }
            y[i] = s / self.lu[row * n + i];
        }
        y
    }
}

/// Solve `A · X = B` by LU with partial pivoting; `B` may have many columns.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "solve: {}x{} vs rhs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let lu = lu_factor(a)?;
    let n = a.rows();
    let mut out = Matrix::zeros(n, b.cols());
    let mut col = vec![0.0; n];
    for c in 0..b.cols() {
        for r in 0..n {
            col[r] = b.get(r, c);
        }
        let x = lu.solve_vec(&col);
        for r in 0..n {
            out.set(r, c, x[r]);
        }
    }
    Ok(out)
}

/// Inverse via Gaussian elimination with partial pivoting.
///
/// For condition numbers up to about 1e6 the round-trip residual
/// `‖A·A⁻¹ − I‖_max` stays below 1e-9.
pub fn invert(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "inverse of non-square {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    solve(a, &Matrix::identity(a.rows()))
}

/// Estimate of the 1-norm condition number `‖A‖₁ · ‖A⁻¹‖₁`.
///
/// The inverse is formed explicitly, so at desk scale this is the exact
/// 1-norm condition number up to rounding; the contract only promises a
/// factor of 10.
pub fn condition_estimate(a: &Matrix) -> Result<f64> {
    let inv = invert(a)?;
    Ok(a.norm1() * inv.norm1())
}

/// Internal: sampled core matrix together with the byproducts of its gate.
pub(crate) struct GatedSample {
    pub matrix: Matrix,
    pub inverse: Matrix,
    pub condition: f64,
}

/// Draw entries for a `q×q` core candidate. One `core_entry` per element in
/// row-major order; streaming generation reuses the same order.
pub(crate) fn sample_core_matrix(q: usize, rng: &mut SeededRng) -> Matrix {
    let mut data = Vec::with_capacity(q * q);
    for _ in 0..q * q {
        data.push(rng.core_entry());
    }
    Matrix {
        rows: q,
        cols: q,
        data,
    }
}

pub(crate) fn sample_gated(q: usize, rng: &mut SeededRng, cond_max: f64) -> Result<GatedSample> {
    for _ in 0..MAX_SAMPLE_RETRIES {
        let candidate = sample_core_matrix(q, rng);
        let inverse = match invert(&candidate) {
            Ok(inv) => inv,
            Err(Error::SingularMatrix { .. }) => continue,
            Err(e) => return Err(e),
        };
        let condition = candidate.norm1() * inverse.norm1();
        if condition <= cond_max {
            return Ok(GatedSample {
                matrix: candidate,
                inverse,
                condition,
            });
        }
    }
    Err(Error::RetryExhausted(MAX_SAMPLE_RETRIES))
}

/// Random `q×q` matrix with every entry in `[-1, -0.05] ∪ [0.05, 1]`,
/// resampled until the condition estimate passes `cond_max`.
pub fn random_invertible(q: usize, rng: &mut SeededRng, cond_max: f64) -> Result<Matrix> {
    if q == 0 {
        return Err(Error::DimensionMismatch("q must be at least 1".into()));
    }
    if cond_max <= 1.0 {
        return Err(Error::DomainError(format!(
            "cond_max must exceed 1, got {cond_max}"
        )));
    }
    Ok(sample_gated(q, rng, cond_max)?.matrix)
}

/// Scale a matrix to unit Frobenius norm.
pub fn unit_l2_normalize(a: &Matrix) -> Result<Matrix> {
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(a.scaled(1.0 / norm))
}

/// Scale each column to unit Euclidean norm.
pub fn unit_l2_normalize_columns(a: &Matrix) -> Result<Matrix> {
    let mut out = a.clone();
    for c in 0..a.cols() {
        let norm: f64 = (0..a.rows())
            .map(|r| a.get(r, c) * a.get(r, c))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        for r in 0..a.rows() {
            out.set(r, c, a.get(r, c) / norm);
        }
    }
    Ok(out)
}

/// Scale a row vector to unit Euclidean norm.
pub fn unit_l2_normalize_row(v: &RowVector) -> Result<RowVector> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    RowVector::from_vec(v.data().iter().map(|x| x / norm).collect())
}
