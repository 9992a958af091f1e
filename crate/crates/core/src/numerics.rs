//! Dense linear algebra used by every other stage of the pipeline.
//!
//! Matrices are stored column-major in a plain `Vec<f64>`. Heavy kernels
//! (matrix products, SVD, symmetric eigendecomposition) are delegated to
//! `faer`; the small solvers whose failure modes matter to the pipeline
//! (Cholesky with pivot reporting, Lawson–Hanson NNLS) are written here.

use std::fmt;
use std::ops::{Index, IndexMut};

use faer::{Mat, MatRef, Side};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite: pivot {pivot} = {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("NNLS did not converge within {iterations} iterations (residual {residual:e})")]
    NnlsNoConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("SVD failed to converge")]
    SvdFailed,
    #[error("eigendecomposition failed to converge")]
    EigenFailed,
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Column-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{}", self.rows, self.cols)?;
        if self.rows * self.cols <= 100 {
            for i in 0..self.rows {
                let row: Vec<String> = (0..self.cols)
                    .map(|j| format!("{:>12.5e}", self[(i, j)]))
                    .collect();
                writeln!(f, "  [{}]", row.join(", "))?;
            }
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

impl DenseMatrix {
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

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from column-major data, rejecting non-finite entries.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NumericsError::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let m = Self { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    /// Builds a matrix from row-major nested slices (convenient in tests).
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend_from_slice(c);
        }
        Self { rows, cols, data }
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(p) => Err(NumericsError::NonFinite {
                row: p % self.rows.max(1),
                col: p / self.rows.max(1),
            }),
            None => Ok(()),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.rows, self.cols)
    }

    pub fn from_faer(m: MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        if self.rows == 0 || other.cols == 0 {
            return Self::zeros(self.rows, other.cols);
        }
        if self.cols == 0 {
            return Self::zeros(self.rows, other.cols);
        }
        let prod: Mat<f64> = self.as_faer() * other.as_faer();
        Self::from_faer(prod.as_ref())
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.rows, other.rows, "t_matmul row mismatch");
        if self.cols == 0 || other.cols == 0 || self.rows == 0 {
            return Self::zeros(self.cols, other.cols);
        }
        let prod: Mat<f64> = self.as_faer().transpose() * other.as_faer();
        Self::from_faer(prod.as_ref())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                *yi += a * xj;
            }
        }
        y
    }

    /// `selfᵀ · x`.
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len());
        (0..self.cols).map(|j| dot(self.col(j), x)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), self.cols, |i, j| self[(idx[i], j)])
    }

    pub fn select_cols(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        Self {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    /// First `k` columns.
    pub fn leading_cols(&self, k: usize) -> Self {
        Self {
            rows: self.rows,
            cols: k,
            data: self.data[..self.rows * k].to_vec(),
        }
    }

    pub fn hcat(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.rows, other.rows, "hcat row mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self {
            rows: self.rows,
            cols: self.cols + other.cols,
            data,
        }
    }

    pub fn vcat(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.cols, other.cols, "vcat column mismatch");
        let rows = self.rows + other.rows;
        Self::from_fn(rows, self.cols, |i, j| {
            if i < self.rows {
                self[(i, j)]
            } else {
                other[(i - self.rows, j)]
            }
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// Scales row `i` by `d[i]`, i.e. `diag(d) · self`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.rows);
        Self::from_fn(self.rows, self.cols, |i, j| d[i] * self[(i, j)])
    }

    pub fn add(&self, other: &DenseMatrix) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for j in 0..self.cols {
            for (si, &a) in s.iter_mut().zip(self.col(j)) {
                *si += a;
            }
        }
        s
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &DenseMatrix) -> Self {
        let (p, q) = (other.rows, other.cols);
        Self::from_fn(self.rows * p, self.cols * q, |i, j| {
            self[(i / p, j / q)] * other[(i % p, j % q)]
        })
    }
}

/// Compressed-sparse-row matrix for the grid-sized stencil operators.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trips {
            assert!(i < rows && j < cols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
        };
        m.prune();
        m
    }

    fn prune(&mut self) {
        if self.vals.iter().all(|&v| v != 0.0) {
            return;
        }
        let trips = self.triplets().filter(|t| t.2 != 0.0).collect();
        *self = Self::from_triplets(self.rows, self.cols, trips);
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let mut trips = Vec::new();
        for j in 0..a.cols() {
            for i in 0..a.rows() {
                if a[(i, j)] != 0.0 {
                    trips.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.rows(), a.cols(), trips)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzeros of row `i` as `(col, value)` pairs in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.cols,
            self.rows,
            self.triplets().map(|(i, j, v)| (j, i, v)).collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= s);
        m.prune();
        m
    }

    pub fn add(&self, other: &SparseMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_triplets(
            self.rows,
            self.cols,
            self.triplets().chain(other.triplets()).collect(),
        )
    }

    /// Stacks `self` on top of `other`.
    pub fn vcat(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.cols, other.cols);
        let off = self.rows;
        Self::from_triplets(
            self.rows + other.rows,
            self.cols,
            self.triplets()
                .chain(other.triplets().map(|(i, j, v)| (i + off, j, v)))
                .collect(),
        )
    }

    pub fn kron(&self, other: &SparseMatrix) -> Self {
        let mut trips = Vec::with_capacity(self.nnz() * other.nnz());
        for (i, j, a) in self.triplets() {
            for (p, q, b) in other.triplets() {
                trips.push((i * other.rows + p, j * other.cols + q, a * b));
            }
        }
        Self::from_triplets(self.rows * other.rows, self.cols * other.cols, trips)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn matmul_dense(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(x.rows(), self.cols);
        let mut out = DenseMatrix::zeros(self.rows, x.cols());
        for c in 0..x.cols() {
            let y = self.matvec(x.col(c));
            out.col_mut(c).copy_from_slice(&y);
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Debug)]
pub struct SvdResult {
    pub left_vectors: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub right_vectors: DenseMatrix,
}

impl SvdResult {
    /// Number of singular values above `rel_tol · σ_max`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .take_while(|&&s| s > rel_tol * smax && s > 0.0)
            .count()
    }
}

/// Thin SVD: `min(rows, cols)` singular triplets, singular values nonincreasing.
pub fn thin_svd(a: &DenseMatrix) -> Result<SvdResult> {
    a.check_finite()?;
    let k = a.rows.min(a.cols);
    if k == 0 {
        return Ok(SvdResult {
            left_vectors: DenseMatrix::zeros(a.rows, 0),
            singular_values: Vec::new(),
            right_vectors: DenseMatrix::zeros(a.cols, 0),
        });
    }
    let svd = a.as_faer().thin_svd().map_err(|_| NumericsError::SvdFailed)?;
    let s = svd.S().column_vector();
    Ok(SvdResult {
        left_vectors: DenseMatrix::from_faer(svd.U()),
        singular_values: (0..k).map(|i| s[i].max(0.0)).collect(),
        right_vectors: DenseMatrix::from_faer(svd.V()),
    })
}

/// Minimum-norm least-squares solution of `A x ≈ b`.
pub fn lstsq(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows {
        return Err(NumericsError::Dimension(format!(
            "lstsq: rhs has {} entries, matrix has {} rows",
            b.len(),
            a.rows
        )));
    }
    if let Some(p) = b.iter().position(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite { row: p, col: 0 });
    }
    let svd = thin_svd(a)?;
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = smax * f64::EPSILON * a.rows.max(a.cols) as f64;
    let utb = svd.left_vectors.t_matvec(b);
    let mut x = vec![0.0; a.cols];
    for (k, (&s, &c)) in svd.singular_values.iter().zip(&utb).enumerate() {
        if s <= cutoff || s == 0.0 {
            break;
        }
        let coef = c / s;
        for (xi, &v) in x.iter_mut().zip(svd.right_vectors.col(k)) {
            *xi += coef * v;
        }
    }
    Ok(x)
}

/// Lawson–Hanson active-set NNLS: `argmin_{x ≥ 0} ½‖A x − b‖²`.
///
/// The outer loop is capped at `10 · cols` index additions.
pub fn nnls(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    nnls_warm(a, b, &vec![0.0; a.cols])
}

/// [`nnls`] started from the feasible point `x0` (negative entries are
/// clipped); the positive entries of `x0` seed the passive set.
pub fn nnls_warm(a: &DenseMatrix, b: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = (a.rows, a.cols);
    if b.len() != m || x0.len() != n {
        return Err(NumericsError::Dimension(format!(
            "nnls: rhs has {} entries and start {} for a {m}x{n} matrix",
            b.len(),
            x0.len()
        )));
    }
    a.check_finite()?;
    let mut x: Vec<f64> = x0.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    if n == 0 {
        return Ok(x);
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let tol = 10.0 * f64::EPSILON * a.frobenius_norm() * bnorm * (m.max(n) as f64).sqrt();
    let cap = 10 * n;

    let mut passive: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    let mut blocked = vec![false; n];
    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = a.matvec(x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    };
    if passive.iter().any(|&p| p) {
        settle(a, b, &mut x, &mut passive, None)?;
    }
    let mut r = residual(&x);
    let mut iterations = 0;

    loop {
        let grad = a.t_matvec(&r);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j])
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]).then(j.cmp(&i)));
        let t = match candidate {
            Some(t) if grad[t] > tol => t,
            _ => break,
        };
        iterations += 1;
        if iterations > cap {
            return Err(NumericsError::NnlsNoConvergence {
                iterations: cap,
                residual: norm2(&r),
                best: x,
            });
        }
        passive[t] = true;
        if settle(a, b, &mut x, &mut passive, Some(t))? {
            blocked.iter_mut().for_each(|bl| *bl = false);
        } else {
            // Gradient at the noise level: skip this index for now.
            blocked[t] = true;
        }
        r = residual(&x);
    }
    Ok(x)
}

/// Lawson–Hanson inner loop. Returns `false` when the entering index `t`
/// gets a nonpositive coefficient on the first solve (nothing changes).
fn settle(a: &DenseMatrix, b: &[f64], x: &mut [f64], passive: &mut [bool], t: Option<usize>) -> Result<bool> {
    let mut first = true;
    loop {
        let pidx: Vec<usize> = (0..x.len()).filter(|&j| passive[j]).collect();
        let z = lstsq(&a.select_cols(&pidx), b)?;
        if first {
            first = false;
            if let Some(t) = t {
                let zt = pidx.iter().position(|&j| j == t).map_or(0.0, |p| z[p]);
                if zt <= 0.0 {
                    passive[t] = false;
                    return Ok(false);
                }
            }
        }
        if z.iter().all(|&v| v > 0.0) {
            for (&j, &v) in pidx.iter().zip(&z) {
                x[j] = v;
            }
            return Ok(true);
        }
        let (alpha, hit) = pidx
            .iter()
            .zip(&z)
            .filter(|(_, &zj)| zj <= 0.0)
            .map(|(&j, &zj)| (x[j] / (x[j] - zj), j))
            .fold((f64::INFINITY, usize::MAX), |acc, c| if c.0 < acc.0 { c } else { acc });
        for (&j, &zj) in pidx.iter().zip(&z) {
            x[j] += alpha * (zj - x[j]);
            if j == hit || x[j] <= 0.0 {
                x[j] = 0.0;
                passive[j] = false;
            }
        }
        if !passive.iter().any(|&p| p) {
            return Ok(true);
        }
    }
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive-definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    /// Factors `a`; a pivot at or below `n · ε · max(diag)` is reported as
    /// a loss of definiteness.
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(NumericsError::Dimension(format!(
                "cholesky of a {}x{} matrix",
                a.rows, a.cols
            )));
        }
        a.check_finite()?;
        let n = a.rows;
        let dmax = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
        let floor = n.max(1) as f64 * f64::EPSILON * dmax;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= floor || d.is_nan() {
                return Err(NumericsError::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn solve(&self, b: &DenseMatrix) -> DenseMatrix {
        let cols: Vec<Vec<f64>> = (0..b.cols).map(|j| self.solve_vec(b.col(j))).collect();
        if cols.is_empty() {
            return DenseMatrix::zeros(b.rows, 0);
        }
        DenseMatrix::from_columns(&cols)
    }
}

/// Solves `A X = B` for symmetric positive-definite `A`.
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(NumericsError::Dimension(format!(
            "solve_spd: {}x{} system with {} rhs rows",
            a.rows, a.cols, b.rows
        )));
    }
    let sym_err = (0..a.rows)
        .flat_map(|i| (0..a.cols).map(move |j| (i, j)))
        .fold(0.0f64, |m, (i, j)| m.max((a[(i, j)] - a[(j, i)]).abs()));
    if a.is_square() && sym_err > 1e-12 * a.max_abs().max(1e-300) {
        return Err(NumericsError::Dimension(format!(
            "solve_spd: matrix is not symmetric (asymmetry {sym_err:e})"
        )));
    }
    Ok(Cholesky::new(a)?.solve(b))
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if !a.is_square() {
        return Err(NumericsError::Dimension("symmetric_eigen of non-square".into()));
    }
    a.check_finite()?;
    if a.rows == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    let evd = a
        .as_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| NumericsError::EigenFailed)?;
    let s = evd.S().column_vector();
    let vals = (0..a.rows).map(|i| s[i]).collect();
    Ok((vals, DenseMatrix::from_faer(evd.U())))
}

/// Orthonormal basis for the column space of `a`, cutting singular values
/// below `rel_tol · σ_max`.
pub fn orthonormal_range(a: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    let svd = thin_svd(a)?;
    let r = svd.numerical_rank(rel_tol);
    Ok(svd.left_vectors.leading_cols(r))
}

/// Spectral norm via the SVD.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    let svd = thin_svd(a)?;
    Ok(svd.singular_values.first().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut StdRng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn reconstruct(s: &SvdResult) -> DenseMatrix {
        let us = DenseMatrix::from_fn(s.left_vectors.rows(), s.singular_values.len(), |i, j| {
            s.left_vectors[(i, j)] * s.singular_values[j]
        });
        us.matmul(&s.right_vectors.transpose())
    }

    fn orthonormality_error(q: &DenseMatrix) -> f64 {
        q.t_matmul(q).sub(&DenseMatrix::identity(q.cols())).max_abs()
    }

    #[test]
    fn svd_of_identity_and_diagonal() {
        let s = thin_svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0, 1.0]);
        let s = thin_svd(&DenseMatrix::from_diagonal(&[3.0, 2.0, 1.0])).unwrap();
        for (a, b) in s.singular_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let s = thin_svd(&DenseMatrix::from_diagonal(&[1.0, 3.0, 2.0])).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-15);
        assert!((s.singular_values[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        let mut rng = StdRng::seed_from_u64(7);
        for &(r, c) in &[(20, 5), (5, 20), (60, 60), (200, 37)] {
            let a = random_matrix(&mut rng, r, c);
            let s = thin_svd(&a).unwrap();
            assert_eq!(s.singular_values.len(), r.min(c));
            let err = reconstruct(&s).sub(&a).max_abs();
            assert!(err <= 1e-12 * a.frobenius_norm(), "reconstruction {err:e}");
            assert!(orthonormality_error(&s.left_vectors) < 1e-12);
            assert!(orthonormality_error(&s.right_vectors) < 1e-12);
            assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut a = DenseMatrix::identity(2);
        a[(1, 0)] = f64::NAN;
        assert!(matches!(thin_svd(&a), Err(NumericsError::NonFinite { row: 1, col: 0 })));
    }

    #[test]
    fn lstsq_identity_and_line_fit() {
        let b = [0.3, -1.2, 4.0];
        let x = lstsq(&DenseMatrix::identity(3), &b).unwrap();
        for (xi, bi) in x.iter().zip(b) {
            assert!((xi - bi).abs() < 1e-15);
        }
        // y = 2 - 0.5 t sampled at three collinear points.
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0], &[1.0, 1.0], &[1.0, 3.0]]);
        let x = lstsq(&a, &[2.0, 1.5, 0.5]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn lstsq_rank_deficient_is_minimum_norm() {
        let mut rng = StdRng::seed_from_u64(3);
        let base = random_matrix(&mut rng, 12, 3);
        // Duplicate columns make the problem rank deficient.
        let a = base.hcat(&base.select_cols(&[0, 1]));
        let b: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = lstsq(&a, &b).unwrap();
        // Pseudo-inverse oracle built from the SVD directly.
        let s = thin_svd(&a).unwrap();
        let r = s.numerical_rank(1e-12);
        let mut xp = vec![0.0; a.cols()];
        for k in 0..r {
            let c = dot(s.left_vectors.col(k), &b) / s.singular_values[k];
            for (xi, v) in xp.iter_mut().zip(s.right_vectors.col(k)) {
                *xi += c * v;
            }
        }
        for (p, q) in x.iter().zip(&xp) {
            assert!((p - q).abs() < 1e-12);
        }
        // Residual orthogonal to the column space.
        let ax = a.matvec(&x);
        let res: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        assert!(norm2(&a.t_matvec(&res)) < 1e-12);
    }

    fn kkt_residual(a: &DenseMatrix, b: &[f64], x: &[f64]) -> f64 {
        let ax = a.matvec(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let g = a.t_matvec(&r);
        x.iter()
            .zip(&g)
            .map(|(&xi, &gi)| if xi > 0.0 { gi.abs() } else { gi.max(0.0) })
            .fold(0.0, f64::max)
    }

    #[test]
    fn nnls_small_cases() {
        let x = nnls(&DenseMatrix::identity(2), &[1.0, 2.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
        let x = nnls(&DenseMatrix::identity(2), &[-1.0, 2.0]).unwrap();
        assert_eq!(x, vec![0.0, 2.0]);
        assert!(kkt_residual(&DenseMatrix::identity(2), &[-1.0, 2.0], &x) < 1e-15);
    }

    #[test]
    fn nnls_recovers_planted_solution() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 10, 4);
            let truth: Vec<f64> = (0..4)
                .map(|j| if j == 1 { 0.0 } else { rng.gen_range(0.1..2.0) })
                .collect();
            let b = a.matvec(&truth);
            let x = nnls(&a, &b).unwrap();
            for (p, q) in x.iter().zip(&truth) {
                assert!((p - q).abs() < 1e-10, "{x:?} vs {truth:?}");
            }
        }
    }

    #[test]
    fn nnls_satisfies_kkt_on_random_problems() {
        let mut rng = StdRng::seed_from_u64(5);
        for trial in 0..50 {
            let (m, n) = if trial % 2 == 0 { (30, 12) } else { (8, 20) };
            let a = random_matrix(&mut rng, m, n);
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = nnls(&a, &b).unwrap();
            assert!(x.iter().all(|&v| v >= 0.0));
            assert!(kkt_residual(&a, &b, &x) <= 1e-10 * norm2(&b));
        }
    }

    #[test]
    fn spd_solve_and_pivot_error() {
        let x = solve_spd(&DenseMatrix::identity(3).scale(2.0), &DenseMatrix::identity(3)).unwrap();
        assert!(x.sub(&DenseMatrix::identity(3).scale(0.5)).max_abs() < 1e-16);

        let mut rng = StdRng::seed_from_u64(9);
        let v = random_matrix(&mut rng, 30, 6);
        let a = v.t_matmul(&v);
        let b = random_matrix(&mut rng, 6, 2);
        let x = solve_spd(&a, &b).unwrap();
        let rel = a.matmul(&x).sub(&b).frobenius_norm() / b.frobenius_norm();
        assert!(rel < 1e-12);
        // SVD oracle: x = (VᵀV)⁻¹ b = V⁺ V⁺ᵀ b.
        let s = thin_svd(&a).unwrap();
        let inv = DenseMatrix::from_fn(6, 6, |i, j| {
            (0..6)
                .map(|k| s.right_vectors[(i, k)] * s.left_vectors[(j, k)] / s.singular_values[k])
                .sum()
        });
        assert!(inv.matmul(&b).sub(&x).max_abs() < 1e-10 * x.max_abs());

        let singular = DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        match solve_spd(&singular, &DenseMatrix::identity(2)) {
            Err(NumericsError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected pivot error, got {other:?}"),
        }
    }

    #[test]
    fn kron_matches_definition() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = DenseMatrix::from_rows(&[&[0.0, 5.0], &[6.0, 7.0]]);
        let k = a.kron(&b);
        assert_eq!(k[(0, 1)], 5.0);
        assert_eq!(k[(3, 2)], 4.0 * 6.0);
        assert_eq!(k[(2, 1)], 3.0 * 5.0);
    }

    #[test]
    fn symmetric_eigen_ascending() {
        let a = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        assert!(orthonormality_error(&vecs) < 1e-14);
    }
}
