//! Dense row-major matrices and vectors plus the handful of kernels the
//! Levenberg-Marquardt step needs: `JᵀJ`, `Jᵀr` and an SPD solve.

use std::fmt;
use std::ops::Index;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("expected {expected} elements for a {rows}x{cols} matrix, got {actual}")]
    ElementCount {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite element {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("system is not positive definite (pivot {pivot:e} at column {column})")]
    IndefiniteSystem { column: usize, pivot: f64 },
}

fn check_finite(values: &[f64]) -> Result<(), LinalgError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(LinalgError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Finite vector of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(data: Vec<f64>) -> Result<Self, LinalgError> {
        check_finite(&data)?;
        Ok(Self(data))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + other`, failing if the sum leaves the finite range.
    pub fn add(&self, other: &DenseVector) -> Result<DenseVector, LinalgError> {
        if self.len() != other.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot add vectors of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        DenseVector::new(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = LinalgError;

    fn try_from(v: Vec<f64>) -> Result<Self, LinalgError> {
        DenseVector::new(v)
    }
}

/// Finite row-major matrix, indexed `(row, col)` from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        let expected = rows * cols;
        if data.len() != expected {
            return Err(LinalgError::ElementCount {
                rows,
                cols,
                expected,
                actual: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(LinalgError::DimensionMismatch(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, LinalgError> {
        check_finite(diag)?;
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn mul_vec(&self, x: &DenseVector) -> Result<DenseVector, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        DenseVector::new(
            (0..self.rows)
                .map(|i| self.row(i).iter().zip(x.iter()).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }

    /// Rows selected by index, in the order given.
    pub fn select_rows(&self, indices: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Adds `diag[i]` to element `(i, i)`.
    pub(crate) fn add_to_diagonal(&mut self, diag: &[f64]) {
        debug_assert_eq!(diag.len(), self.rows);
        for (i, d) in diag.iter().enumerate() {
            self.data[i * self.cols + i] += d;
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (row, col): (usize, usize)) -> &f64 {
        &self.data[row * self.cols + col]
    }
}

impl fmt::Display for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:.6}")).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// `JᵀJ`. Only the upper triangle is accumulated; the lower one is a mirror,
/// so the result is bitwise symmetric.
pub fn gram(j: &DenseMatrix) -> DenseMatrix {
    let n = j.cols;
    let mut out = DenseMatrix::zeros(n, n);
    for p in 0..n {
        for q in p..n {
            let mut acc = 0.0;
            for i in 0..j.rows {
                acc += j.get(i, p) * j.get(i, q);
            }
            out.data[p * n + q] = acc;
            out.data[q * n + p] = acc;
        }
    }
    out
}

/// `Jᵀr`.
pub fn mul_transpose_vec(j: &DenseMatrix, r: &DenseVector) -> Result<DenseVector, LinalgError> {
    if r.len() != j.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "Jᵀr with J {}x{} and r of length {}",
            j.rows,
            j.cols,
            r.len()
        )));
    }
    let mut out = vec![0.0; j.cols];
    for i in 0..j.rows {
        let ri = r[i];
        for (o, jv) in out.iter_mut().zip(j.row(i)) {
            *o += jv * ri;
        }
    }
    DenseVector::new(out)
}

const SYMMETRY_TOL: f64 = 1e-10;

/// Solves `A x = b` for symmetric positive definite `A` with a
/// square-root-free (LDLᵀ) Cholesky factorization.
///
/// A pivot that is not positive (or is pure cancellation noise relative to
/// the original diagonal entry) yields [`LinalgError::IndefiniteSystem`].
/// Nothing is added to the diagonal to rescue the factorization; the LM loop
/// answers that error by raising the damping factor.
pub fn solve_spd(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector, LinalgError> {
    let n = a.rows;
    if a.cols != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "solve_spd needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "right-hand side of length {} for a {n}x{n} system",
            b.len()
        )));
    }

    let scale = a.data.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (a.get(i, j) - a.get(j, i)).abs();
            if diff > SYMMETRY_TOL * scale {
                return Err(LinalgError::NotSymmetric {
                    row: i,
                    col: j,
                    diff,
                });
            }
        }
    }

    // A = L·diag(d)·Lᵀ with unit lower-triangular L, row-major.
    let mut l = vec![0.0; n * n];
    let mut d = vec![0.0; n];
    for k in 0..n {
        let mut pivot = a.get(k, k);
        for p in 0..k {
            pivot -= l[k * n + p] * l[k * n + p] * d[p];
        }
        let floor = f64::EPSILON * n as f64 * a.get(k, k).abs();
        if !(pivot > floor) || !pivot.is_finite() {
            return Err(LinalgError::IndefiniteSystem { column: k, pivot });
        }
        d[k] = pivot;
        l[k * n + k] = 1.0;
        for i in (k + 1)..n {
            let mut s = a.get(i, k);
            for p in 0..k {
                s -= l[i * n + p] * l[k * n + p] * d[p];
            }
            l[i * n + k] = s / pivot;
        }
    }

    // L z = b, then diag(d) w = z, then Lᵀ x = w
    let mut x = b.as_slice().to_vec();
    for i in 0..n {
        for p in 0..i {
            x[i] -= l[i * n + p] * x[p];
        }
    }
    for i in 0..n {
        x[i] /= d[i];
    }
    for i in (0..n).rev() {
        for p in (i + 1)..n {
            x[i] -= l[p * n + i] * x[p];
        }
    }

    DenseVector::new(x).map_err(|_| LinalgError::IndefiniteSystem {
        column: n.saturating_sub(1),
        pivot: f64::NAN,
    })
}
