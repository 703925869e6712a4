//! Dense row-major matrices and vectors, generic over the scalar type.
//!
//! Everything in the crate works on matrices of at most a few hundred rows,
//! so the implementations favour clarity over blocking or BLAS dispatch.

use crate::error::{Error, Result};
use crate::grad::Scalar;

/// Relative jitter added to the diagonal on the first failed factorization.
pub const JITTER_REL_START: f64 = 1e-10;
/// Relative jitter ceiling; factorization fails once this is exhausted.
pub const JITTER_REL_MAX: f64 = 1e-4;

/// Dense real vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector<S = f64> {
    data: Vec<S>,
}

impl<S: Scalar> Vector<S> {
    pub fn new(data: Vec<S>) -> Self {
        Vector { data }
    }

    pub fn zeros(len: usize) -> Self {
        Vector { data: vec![S::zero(); len] }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> S) -> Self {
        Vector { data: (0..len).map(f).collect() }
    }

    pub fn from_f64_slice(values: &[f64]) -> Self {
        Vector { data: values.iter().map(|&v| S::from_f64(v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.data.iter()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn dot(&self, other: &Self) -> S {
        debug_assert_eq!(self.len(), other.len());
        let mut acc = S::zero();
        for (a, b) in self.data.iter().zip(&other.data) {
            acc = acc + *a * *b;
        }
        acc
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Vector::from_fn(self.len(), |i| self[i] + other[i])
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Vector::from_fn(self.len(), |i| self[i] - other[i])
    }

    pub fn scale(&self, factor: S) -> Self {
        Vector::from_fn(self.len(), |i| self[i] * factor)
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Vector { data }
    }

    pub fn to_f64(&self) -> Vector<f64> {
        Vector::new(self.data.iter().map(|v| v.val()).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.val().is_finite())
    }
}

impl<S: Scalar> std::ops::Index<usize> for Vector<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.data[i]
    }
}

impl<S: Scalar> std::ops::IndexMut<usize> for Vector<S> {
    fn index_mut(&mut self, i: usize) -> &mut S {
        &mut self.data[i]
    }
}

/// Dense row-major matrix with explicit dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S = f64> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::from_f64(1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows_f64(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Matrix::from_fn(r, c, |i, j| S::from_f64(rows[i][j]))
    }

    pub fn from_diag(diag: &Vector<S>) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = diag[i];
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn diag(&self) -> Vector<S> {
        let n = self.rows.min(self.cols);
        Vector::from_fn(n, |i| self[(i, i)])
    }

    pub fn row(&self, i: usize) -> Vector<S> {
        Vector::from_fn(self.cols, |j| self[(i, j)])
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + other[(i, j)])
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - other[(i, j)])
    }

    pub fn scale(&self, factor: S) -> Self {
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * factor)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &Vector<S>) -> Vector<S> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        Vector::from_fn(self.rows, |i| {
            let mut acc = S::zero();
            for j in 0..self.cols {
                acc = acc + self[(i, j)] * v[j];
            }
            acc
        })
    }

    /// x^T A y without forming intermediates.
    pub fn quad_form(&self, x: &Vector<S>, y: &Vector<S>) -> S {
        debug_assert_eq!(self.rows, x.len());
        debug_assert_eq!(self.cols, y.len());
        let mut acc = S::zero();
        for i in 0..self.rows {
            let mut row = S::zero();
            for j in 0..self.cols {
                row = row + self[(i, j)] * y[j];
            }
            acc = acc + x[i] * row;
        }
        acc
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].val())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.val().is_finite())
    }

    /// Maximum absolute asymmetry relative to the largest diagonal magnitude.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..self.rows {
            scale = scale.max(self[(i, i)].val().abs());
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)].val() - self[(j, i)].val()).abs());
            }
        }
        worst / (1.0 + scale)
    }

    fn mean_diag_val(&self) -> f64 {
        let n = self.rows.min(self.cols);
        let sum: f64 = (0..n).map(|i| self[(i, i)].val()).sum();
        (sum / n as f64).abs().max(f64::MIN_POSITIVE)
    }

    fn cholesky_attempt(&self, jitter: f64) -> Option<Matrix<S>> {
        let n = self.rows;
        let mut lower = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self[(i, j)];
                if i == j && jitter > 0.0 {
                    sum = sum + jitter;
                }
                for k in 0..j {
                    sum = sum - lower[(i, k)] * lower[(j, k)];
                }
                if i == j {
                    if !(sum.val() > 0.0) || !sum.val().is_finite() {
                        return None;
                    }
                    lower[(i, j)] = sum.sqrt();
                } else {
                    lower[(i, j)] = sum / lower[(j, j)];
                }
            }
        }
        Some(lower)
    }

    /// Lower-triangular Cholesky factor.
    ///
    /// On failure the diagonal is jittered starting at
    /// `1e-10 * mean(diag)` and escalating tenfold up to `1e-4 * mean(diag)`
    /// before giving up with [`Error::NotPositiveDefinite`].
    pub fn cholesky(&self) -> Result<Matrix<S>> {
        assert_eq!(self.rows, self.cols, "cholesky requires a square matrix");
        if let Some(l) = self.cholesky_attempt(0.0) {
            return Ok(l);
        }
        let scale = self.mean_diag_val();
        let mut rel = JITTER_REL_START;
        while rel <= JITTER_REL_MAX * (1.0 + 1e-12) {
            if let Some(l) = self.cholesky_attempt(rel * scale) {
                return Ok(l);
            }
            rel *= 10.0;
        }
        Err(Error::NotPositiveDefinite { size: self.rows, max_jitter: JITTER_REL_MAX * scale })
    }

    /// Solves `L y = b` for lower-triangular `self`.
    pub fn solve_lower(&self, b: &Vector<S>) -> Vector<S> {
        let n = self.rows;
        let mut y = Vector::zeros(n);
        for i in 0..n {
            let mut acc = b[i];
            for j in 0..i {
                acc = acc - self[(i, j)] * y[j];
            }
            y[i] = acc / self[(i, i)];
        }
        y
    }

    /// Solves `L^T x = b` for lower-triangular `self`.
    pub fn solve_lower_transpose(&self, b: &Vector<S>) -> Vector<S> {
        let n = self.rows;
        let mut x = Vector::zeros(n);
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in (i + 1)..n {
                acc = acc - self[(j, i)] * x[j];
            }
            x[i] = acc / self[(i, i)];
        }
        x
    }

    /// Solves `(L L^T) x = b` given the lower factor `self`.
    pub fn chol_solve(&self, b: &Vector<S>) -> Vector<S> {
        self.solve_lower_transpose(&self.solve_lower(b))
    }

    /// Solves `(L L^T) X = B` column by column given the lower factor `self`.
    pub fn chol_solve_mat(&self, b: &Matrix<S>) -> Matrix<S> {
        let mut out = Matrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let col = Vector::from_fn(b.rows, |i| b[(i, j)]);
            let x = self.chol_solve(&col);
            for i in 0..b.rows {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    /// log det(A) from the lower factor `self` of A.
    pub fn chol_logdet(&self) -> S {
        let mut acc = S::zero();
        for i in 0..self.rows {
            acc = acc + self[(i, i)].ln();
        }
        acc * 2.0
    }

    /// Inverse of an SPD matrix via its Cholesky factorization.
    pub fn inverse_spd(&self) -> Result<Matrix<S>> {
        let chol = self.cholesky()?;
        Ok(chol.chol_solve_mat(&Matrix::identity(self.rows)))
    }
}

impl<S: Scalar> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<S: Scalar> std::ops::IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric matrix (jittered on demand).
pub fn cholesky<S: Scalar>(a: &Matrix<S>) -> Result<Matrix<S>> {
    a.cholesky()
}
