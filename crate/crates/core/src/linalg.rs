//! Small dense linear algebra for the `d × N` and `N × N` objects used by the
//! optimizer.
//!
//! Two storage types live here. [`DenseMatrix`] is a row-major matrix used for
//! the small `N × N` systems (Gram matrices, the graph Laplacian, eigenvector
//! bases). [`ParamMatrix`] is column-major and holds `N` vectors of length `d`
//! side by side, so each parameter vector or gradient is a contiguous slice.
//! Nothing in this module ever builds a `d × d` object.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Elementwise tolerance for accepting a matrix as symmetric, relative to its
/// largest absolute entry (or absolute when all entries are below one).
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Off-diagonal Frobenius norm, relative to the input norm, at which Jacobi
/// sweeps stop.
pub const JACOBI_TOL: f64 = 1e-14;

pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues below `-PSD_TOL * trace` are treated as a genuine loss of
/// positive semi-definiteness rather than roundoff.
pub const PSD_TOL: f64 = 1e-8;

/// Row-major dense matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
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

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} for a {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest `|s[i,j] - s[j,i]|`; square matrices only.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * k).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(
                "subtraction of differently shaped matrices".into(),
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// `d × N` matrix stored column by column: each column is one parameter
/// vector (or one gradient).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamMatrix {
    dim: usize,
    n_cols: usize,
    data: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type GradMatrix = ParamMatrix;

impl ParamMatrix {
    pub fn zeros(dim: usize, n_cols: usize) -> Self {
        Self {
            dim,
            n_cols,
            data: vec![0.0; dim * n_cols],
        }
    }

    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let dim = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(dim * columns.len());
        for (i, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != dim {
                return Err(Error::Dimension(format!(
                    "column {i} has length {}, expected {dim}",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            dim,
            n_cols: columns.len(),
            data,
        })
    }

    /// Builds from column-major data of length `dim * n_cols`.
    pub fn from_column_major(dim: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * n_cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {dim}x{n_cols} parameter matrix",
                data.len()
            )));
        }
        Ok(Self { dim, n_cols, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        (0..self.n_cols).map(move |i| self.column(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &ParamMatrix) -> bool {
        self.dim == other.dim && self.n_cols == other.n_cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `selfᵀ · other`, an `N × M` matrix of column inner products.
    pub fn cross(&self, other: &ParamMatrix) -> Result<DenseMatrix> {
        if self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "inner products between columns of length {} and {}",
                self.dim, other.dim
            )));
        }
        let mut out = DenseMatrix::zeros(self.n_cols, other.n_cols);
        for i in 0..self.n_cols {
            for j in 0..other.n_cols {
                out[(i, j)] = dot(self.column(i), other.column(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · self`, filled from the upper triangle so it is exactly symmetric.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.n_cols;
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(self.column(i), self.column(j));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn mean_column(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for c in self.columns() {
            for (m, x) in mean.iter_mut().zip(c) {
                *m += x;
            }
        }
        let n = self.n_cols as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Right-multiplies by a dense `N × M` matrix: `self · m`.
    pub fn mul_dense(&self, m: &DenseMatrix) -> Result<ParamMatrix> {
        if m.rows() != self.n_cols {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.dim,
                self.n_cols,
                m.rows(),
                m.cols()
            )));
        }
        let mut out = ParamMatrix::zeros(self.dim, m.cols());
        for j in 0..m.cols() {
            let dst = out.column_mut(j);
            for k in 0..self.n_cols {
                axpy(m[(k, j)], self.column(k), dst);
            }
        }
        Ok(out)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Entrywise product of two equally shaped matrices.
pub fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::Dimension(format!(
            "hadamard product of {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(DenseMatrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

/// Laplacian of the complete graph on `n` vertices, `n·I − 𝟙𝟙ᵀ`.
pub fn complete_graph_laplacian(n: usize) -> Result<DenseMatrix> {
    if n < 2 {
        return Err(Error::InvalidSize(format!(
            "complete-graph Laplacian needs at least 2 vertices, got {n}"
        )));
    }
    let mut l = DenseMatrix {
        rows: n,
        cols: n,
        data: vec![-1.0; n * n],
    };
    for i in 0..n {
        l[(i, i)] = (n - 1) as f64;
    }
    Ok(l)
}

/// Eigendecomposition `S = V · diag(λ) · Vᵀ` of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEigDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector for `eigenvalues[k]`, with its first
    /// non-negligible component positive.
    pub eigenvectors: DenseMatrix,
}

impl SymEigDecomposition {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// `V · diag(f(λ)) · Vᵀ · rhs` without forming the matrix.
    pub fn apply_spectral<F: Fn(f64) -> f64>(&self, rhs: &[f64], f: F) -> Vec<f64> {
        let n = self.dimension();
        let v = &self.eigenvectors;
        let mut out = vec![0.0; n];
        for k in 0..n {
            let proj: f64 = (0..n).map(|i| v[(i, k)] * rhs[i]).sum();
            let w = f(self.eigenvalues[k]) * proj;
            for (i, o) in out.iter_mut().enumerate() {
                *o += w * v[(i, k)];
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.dimension();
        let mut out = DenseMatrix::zeros(n, n);
        for k in 0..n {
            let lam = self.eigenvalues[k];
            for i in 0..n {
                let vi = self.eigenvectors[(i, k)] * lam;
                for j in 0..n {
                    out[(i, j)] += vi * self.eigenvectors[(j, k)];
                }
            }
        }
        out
    }
}

fn check_symmetric(s: &DenseMatrix) -> Result<()> {
    if !s.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            s.rows, s.cols
        )));
    }
    let asymmetry = s.max_asymmetry();
    if asymmetry > SYMMETRY_TOL * s.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(s: &DenseMatrix) -> Result<SymEigDecomposition> {
    check_symmetric(s)?;
    let n = s.rows;
    let mut a = s.clone();
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let threshold = JACOBI_TOL * a.frobenius_norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate(&mut a, &mut v, p, q, c, sn);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&k| a[(k, k)]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let flip = (0..n)
            .map(|i| v[(i, src)])
            .find(|x| x.abs() > 1e-10)
            .is_some_and(|x| x < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenvectors[(i, dst)] = sign * v[(i, src)];
        }
    }
    Ok(SymEigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.rows {
        for j in 0..a.cols {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

// Applies the rotation in the (p, q) plane that zeroes a[p,q], as Aᵀ ← JᵀAJ, V ← VJ.
fn rotate(a: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows;
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let apq = a[(p, q)];
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a[(k, p)] = new_kp;
        a[(p, k)] = new_kp;
        a[(k, q)] = new_kq;
        a[(q, k)] = new_kq;
    }
    a[(p, p)] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
    a[(q, q)] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Solves `S x = rhs` for a symmetric positive semi-definite `S` after raising
/// every eigenvalue below `epsilon` to `epsilon`.
pub fn clipped_solve(s: &DenseMatrix, epsilon: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue floor must be positive, got {epsilon}"
        )));
    }
    if rhs.len() != s.rows {
        return Err(Error::Dimension(format!(
            "right-hand side of length {} for a {}x{} system",
            rhs.len(),
            s.rows,
            s.cols
        )));
    }
    let eig = sym_eig(s)?;
    let trace = s.trace();
    let lowest = eig.min_eigenvalue();
    if lowest < -PSD_TOL * trace.abs() {
        return Err(Error::PsdViolation {
            eigenvalue: lowest,
            trace,
        });
    }
    Ok(eig.apply_spectral(rhs, |lambda| 1.0 / lambda.max(epsilon)))
}

/// Spread of a point set: `Σᵢ ‖θᵢ − mean(θ)‖²`.
pub fn psi(theta: &ParamMatrix) -> Result<f64> {
    if theta.n_cols() < 2 {
        return Err(Error::InvalidSize(format!(
            "spread needs at least 2 points, got {}",
            theta.n_cols()
        )));
    }
    let mean = theta.mean_column();
    Ok(theta
        .columns()
        .map(|c| {
            c.iter()
                .zip(&mean)
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
        })
        .sum())
}
