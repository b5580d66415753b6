//! Dense row-major matrices and the Gaussian kernel machinery built on them.
//!
//! Everything here is `f64`. Reductions run in a fixed loop order so that
//! repeated calls are bit-identical regardless of caller.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ridge added to the diagonal before inversion.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Pivot magnitude below which a ridged matrix is treated as singular.
const PIVOT_TOLERANCE: f64 = 1e-14;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build from row-major data, rejecting wrong lengths and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::param(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Construct without validation. Callers guarantee shape and finiteness.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
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
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Build from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::param(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copy of the selected rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(idx.len(), self.cols, data)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::param(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(p)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute asymmetry `|m[i,j] - m[j,i]|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    /// Nested row vectors, the form used in JSON checkpoints.
    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
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

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_nested().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Pairwise Gaussian kernel evaluations for one sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub raw: Matrix,
    pub sigma: f64,
}

/// Trace-normalized Gram matrix: `X[i,j] = G[i,j] / (N sqrt(G[i,i] G[j,j]))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGram {
    pub mat: Matrix,
}

impl NormalizedGram {
    pub fn len(&self) -> usize {
        self.mat.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.mat.rows() == 0
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::param(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    Ok(())
}

/// Normalization constant `(2 pi sigma^2)^(-d/2)` of the isotropic Gaussian.
pub fn gaussian_norm_const(sigma: f64, dim: usize) -> f64 {
    (2.0 * PI * sigma * sigma).powf(-(dim as f64) / 2.0)
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Isotropic Gaussian kernel density `G_sigma(a - b)` in `a.len()` dimensions.
pub fn gaussian_kernel(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    gaussian_norm_const(sigma, a.len()) * (-squared_distance(a, b) / (2.0 * sigma * sigma)).exp()
}

/// Gram matrix `raw[i,j] = (2 pi sigma^2)^(-d/2) exp(-|x_i - x_j|^2 / (2 sigma^2))`.
pub fn gaussian_gram(samples: &Matrix, sigma: f64) -> Result<GramMatrix> {
    check_sigma(sigma)?;
    if samples.rows() == 0 || samples.cols() == 0 {
        return Err(Error::param("gram matrix needs at least one sample and one feature"));
    }
    if !samples.is_finite() {
        return Err(Error::data("non-finite sample passed to gaussian_gram"));
    }
    let n = samples.rows();
    let c = gaussian_norm_const(sigma, samples.cols());
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let mut raw = Matrix::zeros(n, n);
    for i in 0..n {
        raw[(i, i)] = c;
        for j in (i + 1)..n {
            let v = c * (-squared_distance(samples.row(i), samples.row(j)) * inv_two_var).exp();
            raw[(i, j)] = v;
            raw[(j, i)] = v;
        }
    }
    Ok(GramMatrix { raw, sigma })
}

pub fn normalize_gram(g: &GramMatrix) -> Result<NormalizedGram> {
    let n = g.raw.rows();
    if !g.raw.is_square() || n == 0 {
        return Err(Error::param("gram matrix must be square and non-empty"));
    }
    let diag_sqrt: Vec<f64> = (0..n).map(|i| g.raw[(i, i)]).map(f64::sqrt).collect();
    if let Some(i) = (0..n).find(|&i| !(g.raw[(i, i)] > 0.0)) {
        return Err(Error::degenerate(format!("gram diagonal entry {i} is not positive")));
    }
    let inv_n = 1.0 / n as f64;
    let mut mat = Matrix::zeros(n, n);
    for i in 0..n {
        mat[(i, i)] = inv_n;
        for j in (i + 1)..n {
            let v = inv_n * g.raw[(i, j)] / (diag_sqrt[i] * diag_sqrt[j]);
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
    }
    Ok(NormalizedGram { mat })
}

/// `(a ∘ b) / tr(a ∘ b)`.
pub fn hadamard_normalized(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::param(format!(
            "hadamard operands must be equal square shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let prod: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).collect();
    let prod = Matrix::from_raw(a.rows(), a.cols(), prod);
    let tr = prod.trace();
    if !(tr > 0.0) {
        return Err(Error::degenerate("trace of hadamard product is not positive"));
    }
    Ok(prod.scale(1.0 / tr))
}

/// `(r + epsilon I)^-1` by Gauss-Jordan elimination with partial pivoting.
pub fn ridge_inverse(r: &Matrix, epsilon: f64) -> Result<Matrix> {
    if !r.is_square() {
        return Err(Error::param(format!("ridge_inverse needs a square matrix, got {:?}", r.shape())));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("ridge epsilon must be non-negative, got {epsilon}")));
    }
    let n = r.rows();
    let mut a = r.clone();
    for i in 0..n {
        a[(i, i)] += epsilon;
    }
    let mut inv = Matrix::identity(n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs()))
            .unwrap_or(col);
        let pivot = a[(pivot_row, col)];
        if pivot.abs() < PIVOT_TOLERANCE {
            return Err(Error::Singular(format!(
                "pivot {pivot:e} in column {col} after ridge {epsilon:e}"
            )));
        }
        if pivot_row != col {
            swap_rows(&mut a, pivot_row, col);
            swap_rows(&mut inv, pivot_row, col);
        }
        let inv_pivot = 1.0 / pivot;
        for j in 0..n {
            a[(col, j)] *= inv_pivot;
            inv[(col, j)] *= inv_pivot;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[(row, col)];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(row, j)] -= factor * a[(col, j)];
                inv[(row, j)] -= factor * inv[(col, j)];
            }
        }
    }
    // One refinement step X += X (I - A X) with the residual accumulated in
    // compensated arithmetic; a 1e-6 ridge on a rank-deficient matrix leaves
    // a condition number near 1e7.
    let mut residual = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = TwoSum::new(if i == j { 1.0 } else { 0.0 });
            for p in 0..n {
                let a = r[(i, p)] + if i == p { epsilon } else { 0.0 };
                acc.add_product(-a, inv[(p, j)]);
            }
            residual[(i, j)] = acc.value();
        }
    }
    let correction = inv.matmul(&residual)?;
    for (v, c) in inv.data.iter_mut().zip(&correction.data) {
        *v += c;
    }
    // Elimination leaves rounding-level asymmetry; the input is symmetric so
    // the exact inverse is too.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = avg;
            inv[(j, i)] = avg;
        }
    }
    if !inv.is_finite() {
        return Err(Error::Singular("inverse has non-finite entries".into()));
    }
    Ok(inv)
}

/// Compensated dot-product accumulator (error-free product and sum).
struct TwoSum {
    sum: f64,
    err: f64,
}

impl TwoSum {
    fn new(start: f64) -> Self {
        Self { sum: start, err: 0.0 }
    }

    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let p_err = a.mul_add(b, -p);
        let s = self.sum + p;
        let bb = s - self.sum;
        let s_err = (self.sum - (s - bb)) + (p - bb);
        self.sum = s;
        self.err += p_err + s_err;
    }

    fn value(&self) -> f64 {
        self.sum + self.err
    }
}

fn swap_rows(m: &mut Matrix, a: usize, b: usize) {
    if a == b {
        return;
    }
    let cols = m.cols();
    for j in 0..cols {
        m.data.swap(a * cols + j, b * cols + j);
    }
}

/// Symmetric quadratic form `v^T m v`.
pub fn quadratic_form(m: &Matrix, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        let row = m.row(i);
        let mut inner = 0.0;
        for (&mij, &vj) in row.iter().zip(v) {
            inner += mij * vj;
        }
        acc += vi * inner;
    }
    acc
}
