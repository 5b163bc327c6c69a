//! Dense real linear algebra for the discriminant fit.
//!
//! Everything here works on row-major `f64` storage. The symmetric
//! eigensolver is a Householder tridiagonalization followed by implicit-shift
//! QL iteration; eigenvectors are accumulated as the rows of `Vᵀ` so every
//! Givens rotation touches two contiguous rows.

use std::fmt;
use std::ops::{Deref, Index, IndexMut};

use thiserror::Error;

/// Relative tolerance used for the symmetry precondition.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// QL sweeps allowed per eigenvalue before giving up.
pub const MAX_QL_SWEEPS: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (|a_ij - a_ji| = {deviation:e})")]
    NotSymmetric { deviation: f64 },
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("eigensolver did not converge for eigenvalue {index}")]
    SolverDiverged { index: usize },
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
}

/// Row-major dense matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended for
    /// literals in tests and small fixtures.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged matrix literal");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
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

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.cols,
                found: rhs.rows,
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, rhs.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    /// `v · self` for a row vector `v`.
    pub fn left_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.rows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (k, &a) in v.iter().enumerate() {
            axpy(a, self.row(k), &mut out);
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest |a_ij - a_ji|; zero for an exactly symmetric matrix.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Copies the upper triangle onto the lower one.
    pub fn mirror_upper(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                self.data[j * n + i] = self.data[i * n + j];
            }
        }
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.rows.min(self.cols) {
            self.data[i * self.cols + i] += value;
        }
    }

    pub fn negate_column(&mut self, j: usize) {
        for i in 0..self.rows {
            let v = &mut self.data[i * self.cols + j];
            *v = -*v;
        }
    }

    /// Leading `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        let k = k.min(self.cols);
        Matrix::from_fn(self.rows, k, |i, j| self[(i, j)])
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

/// An appearance embedding with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(entries: Vec<f64>) -> Result<Self, LinalgError> {
        if entries.is_empty() {
            return Err(LinalgError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { index });
        }
        Ok(Self(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Unit-length copy.
    pub fn normalized(&self) -> Result<Self, LinalgError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(LinalgError::ZeroVector);
        }
        Ok(Self(self.0.iter().map(|v| v / n).collect()))
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, LinalgError> {
    if u.len() != v.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(LinalgError::ZeroVector);
    }
    // The product of the norms is commutative, so the result is symmetric in
    // its arguments bit for bit.
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Eigenpairs sorted by descending eigenvalue. Column `j` of `eigenvectors`
/// belongs to `eigenvalues[j]`.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

fn check_symmetric(m: &Matrix) -> Result<usize, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let deviation = m.asymmetry();
    if deviation > SYMMETRY_TOL * (1.0 + m.max_abs()) {
        return Err(LinalgError::NotSymmetric { deviation });
    }
    Ok(m.rows())
}

/// Lower-triangular `L` with `M = L·Lᵀ`.
pub fn cholesky_spd(m: &Matrix) -> Result<Matrix, LinalgError> {
    let n = check_symmetric(m)?;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let row_j = &l.data[j * n..j * n + j];
        let pivot = m[(j, j)] - dot(row_j, row_j);
        if !pivot.is_finite() || pivot <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite { pivot: j });
        }
        let ljj = pivot.sqrt();
        l.data[j * n + j] = ljj;
        for i in (j + 1)..n {
            let s = dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
            l.data[i * n + j] = (m[(i, j)] - s) / ljj;
        }
    }
    Ok(l)
}

/// Rows per block in the triangular solves: each solved row is reused
/// across a whole block while it is hot in cache.
const SOLVE_BLOCK: usize = 4;

/// Solves `L·Y = X` in place for lower-triangular `L`; `x` is `n × m`
/// row-major.
fn forward_substitute(l: &Matrix, x: &mut [f64], m: usize) {
    let n = l.rows();
    for i0 in (0..n).step_by(SOLVE_BLOCK) {
        let i1 = (i0 + SOLVE_BLOCK).min(n);
        let (solved, rest) = x.split_at_mut(i0 * m);
        let block = &mut rest[..(i1 - i0) * m];
        for k in 0..i0 {
            let xk = &solved[k * m..(k + 1) * m];
            for (r, row) in block.chunks_exact_mut(m).enumerate() {
                let lik = l[(i0 + r, k)];
                if lik != 0.0 {
                    axpy(-lik, xk, row);
                }
            }
        }
        for i in i0..i1 {
            let (done, row) = block.split_at_mut((i - i0) * m);
            let row_i = &mut row[..m];
            for k in i0..i {
                let lik = l[(i, k)];
                if lik != 0.0 {
                    axpy(-lik, &done[(k - i0) * m..(k - i0 + 1) * m], row_i);
                }
            }
            let inv = l[(i, i)];
            for v in row_i.iter_mut() {
                *v /= inv;
            }
        }
    }
}

/// Solves `Lᵀ·W = U` in place for lower-triangular `L`; `u` is `n × m`
/// row-major.
fn backward_substitute_transposed(l: &Matrix, u: &mut [f64], m: usize) {
    let n = l.rows();
    let mut i1 = n;
    while i1 > 0 {
        let i0 = i1.saturating_sub(SOLVE_BLOCK);
        let (head, solved) = u.split_at_mut(i1 * m);
        let block = &mut head[i0 * m..];
        for k in i1..n {
            let xk = &solved[(k - i1) * m..(k - i1 + 1) * m];
            for (r, row) in block.chunks_exact_mut(m).enumerate() {
                let lki = l[(k, i0 + r)];
                if lki != 0.0 {
                    axpy(-lki, xk, row);
                }
            }
        }
        for i in (i0..i1).rev() {
            let (row, done) = block.split_at_mut((i - i0 + 1) * m);
            let row_i = &mut row[(i - i0) * m..];
            for k in (i + 1)..i1 {
                let lki = l[(k, i)];
                if lki != 0.0 {
                    axpy(-lki, &done[(k - i - 1) * m..(k - i) * m], row_i);
                }
            }
            let inv = l[(i, i)];
            for v in row_i.iter_mut() {
                *v /= inv;
            }
        }
        i1 = i0;
    }
}

/// Reduces the symmetric matrix held in `a` (n×n row-major) to tridiagonal
/// form, reading and updating only the upper triangle. On return `diag`/`off` hold the tridiagonal, row `k` of `a` holds
/// the Householder vector of step `k` in columns `k+1..` (leading entry 1)
/// and `betas[k]` its scale.
fn tridiagonalize(a: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    let steps = n.saturating_sub(2);
    let mut betas = vec![0.0; steps];
    let mut p = vec![0.0; n];
    let mut w = vec![0.0; n];

    for k in 0..steps {
        diag[k] = a[k * n + k];
        let x = &mut a[k * n + k + 1..(k + 1) * n];
        let x0 = x[0];
        let tail: f64 = x[1..].iter().map(|v| v * v).sum();
        if tail == 0.0 {
            off[k] = x0;
            continue;
        }
        let len = (x0 * x0 + tail).sqrt();
        let alpha = if x0 >= 0.0 { -len } else { len };
        let v0 = x0 - alpha;
        for v in x[1..].iter_mut() {
            *v /= v0;
        }
        x[0] = 1.0;
        let beta = 2.0 / (1.0 + tail / (v0 * v0));
        betas[k] = beta;
        off[k] = alpha;

        let lo = k + 1;
        let m = n - lo;
        let v: Vec<f64> = a[k * n + lo..(k + 1) * n].to_vec();
        // p = beta * A22 * v, reading only the upper triangle: row i
        // contributes its dot with v to p[i] and scatters into p[j > i].
        let p = &mut p[..m];
        p.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            let row = &a[(lo + i) * n + lo + i..(lo + i + 1) * n];
            p[i] += dot(row, &v[i..]);
            axpy(v[i], &row[1..], &mut p[i + 1..]);
        }
        p.iter_mut().for_each(|x| *x *= beta);
        let kappa = 0.5 * beta * dot(p, &v);
        for i in 0..m {
            w[i] = p[i] - kappa * v[i];
        }
        // A22 -= v wᵀ + w vᵀ on the upper triangle.
        for i in 0..m {
            let row = &mut a[(lo + i) * n + lo + i..(lo + i + 1) * n];
            let (vi, wi) = (v[i], w[i]);
            for ((r, &vj), &wj) in row.iter_mut().zip(&v[i..]).zip(&w[i..m]) {
                *r -= vi * wj + wi * vj;
            }
        }
    }
    if n >= 2 {
        diag[n - 2] = a[(n - 2) * n + n - 2];
        off[n - 2] = a[(n - 2) * n + n - 1];
    }
    if n >= 1 {
        diag[n - 1] = a[n * n - 1];
    }
    (diag, off, betas)
}

/// Forms `Qᵀ` (row-major) from the reflectors left in `a` by
/// [`tridiagonalize`].
fn householder_q_transposed(a: &[f64], betas: &[f64], n: usize) -> Vec<f64> {
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    let mut s = vec![0.0; n];
    // Q = H_0 H_1 ... H_{n-3}; applying from the last reflector keeps the
    // working block confined to rows/cols > k.
    for k in (0..betas.len()).rev() {
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        let lo = k + 1;
        let v = &a[k * n + lo..(k + 1) * n];
        let s = &mut s[lo..];
        s.iter_mut().for_each(|x| *x = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, &q[(lo + i) * n + lo..(lo + i + 1) * n], s);
        }
        for (i, &vi) in v.iter().enumerate() {
            axpy(-beta * vi, s, &mut q[(lo + i) * n + lo..(lo + i + 1) * n]);
        }
    }
    // transpose in place
    for i in 0..n {
        for j in (i + 1)..n {
            q.swap(i * n + j, j * n + i);
        }
    }
    q
}

/// Implicit-shift QL on the tridiagonal (`diag`, `off`), where `off[i]`
/// couples `i` and `i+1`. Rotations are applied to the rows of `vt` when
/// given.
fn tridiagonal_ql(
    diag: &mut [f64],
    off: &mut [f64],
    mut vt: Option<&mut [f64]>,
    n: usize,
) -> Result<(), LinalgError> {
    if n == 0 {
        return Ok(());
    }
    off[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut shift_total = 0.0;
    let mut tst1 = 0.0_f64;
    for l in 0..n {
        tst1 = tst1.max(diag[l].abs() + off[l].abs());
        let mut m = l;
        while m < n - 1 && off[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(LinalgError::SolverDiverged { index: l });
                }
                let g = diag[l];
                let mut p = (diag[l + 1] - g) / (2.0 * off[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                diag[l] = off[l] / (p + r);
                diag[l + 1] = off[l] * (p + r);
                let dl1 = diag[l + 1];
                let mut h = g - diag[l];
                for d in diag[l + 2..n].iter_mut() {
                    *d -= h;
                }
                shift_total += h;

                p = diag[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = off[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * off[i];
                    h = c * p;
                    r = p.hypot(off[i]);
                    off[i + 1] = s * r;
                    s = off[i] / r;
                    c = p / r;
                    p = c * diag[i] - s * g;
                    diag[i + 1] = h + s * (c * g + s * diag[i]);

                    if let Some(vt) = vt.as_deref_mut() {
                        let (upper, lower) = vt.split_at_mut((i + 1) * n);
                        let row_i = &mut upper[i * n..];
                        let row_next = &mut lower[..n];
                        for (a, b) in row_i.iter_mut().zip(row_next.iter_mut()) {
                            let hb = *b;
                            *b = s * *a + c * hb;
                            *a = c * *a - s * hb;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * off[l] / dl1;
                off[l] = s * p;
                diag[l] = c * p;
                if off[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        diag[l] += shift_total;
        off[l] = 0.0;
    }
    Ok(())
}

/// Flips `v` so its first non-negligible component is non-negative.
fn canonical_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Solves `M·X = R` for symmetric positive-definite `M`.
pub fn solve_spd(m: &Matrix, rhs: &Matrix) -> Result<Matrix, LinalgError> {
    let l = cholesky_spd(m)?;
    if rhs.rows() != l.rows() {
        return Err(LinalgError::DimensionMismatch {
            expected: l.rows(),
            found: rhs.rows(),
        });
    }
    let cols = rhs.cols();
    let mut x = rhs.as_slice().to_vec();
    forward_substitute(&l, &mut x, cols);
    backward_substitute_transposed(&l, &mut x, cols);
    Ok(Matrix {
        rows: rhs.rows(),
        cols,
        data: x,
    })
}

/// Eigenvalues (descending) and the matching rows of `Vᵀ`.
fn sym_eig_rows(m: &Matrix) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let n = check_symmetric(m)?;
    let mut a = m.as_slice().to_vec();
    let (mut diag, mut off, betas) = tridiagonalize(&mut a, n);
    let mut vt = householder_q_transposed(&a, &betas, n);
    tridiagonal_ql(&mut diag, &mut off, Some(&mut vt), n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut rows = Vec::with_capacity(n * n);
    for &i in &order {
        rows.extend_from_slice(&vt[i * n..(i + 1) * n]);
    }
    for r in rows.chunks_mut(n.max(1)) {
        canonical_sign(r);
    }
    Ok((values, rows))
}

/// Eigenvector of the symmetric tridiagonal (`diag`, `off`) for the
/// eigenvalue `lambda`, by inverse iteration from `start`. Components along
/// `against` (unit vectors) are projected out after every solve.
fn tridiagonal_inverse_iteration(
    diag: &[f64],
    off: &[f64],
    lambda: f64,
    start: Vec<f64>,
    against: &[&[f64]],
    tiny: f64,
) -> Vec<f64> {
    let n = diag.len();
    // LU with partial pivoting of T - λI: U has up to two superdiagonals.
    let mut u0: Vec<f64> = diag.iter().map(|d| d - lambda).collect();
    let mut u1: Vec<f64> = off[..n.saturating_sub(1)].to_vec();
    let mut u2 = vec![0.0; n.saturating_sub(2)];
    let mut mult = vec![0.0; n.saturating_sub(1)];
    let mut swapped = vec![false; n.saturating_sub(1)];
    for i in 0..n.saturating_sub(1) {
        let sub = off[i];
        if sub.abs() > u0[i].abs() {
            swapped[i] = true;
            let m = u0[i] / sub;
            mult[i] = m;
            u0[i] = sub;
            let t = u1[i];
            u1[i] = diag[i + 1] - lambda;
            u0[i + 1] = t - m * u1[i];
            if i + 2 < n {
                u2[i] = off[i + 1];
                u1[i + 1] = -m * u2[i];
            }
        } else {
            let m = if u0[i] == 0.0 { 0.0 } else { sub / u0[i] };
            mult[i] = m;
            u0[i + 1] -= m * u1[i];
        }
    }
    for p in u0.iter_mut() {
        if p.abs() < tiny {
            *p = if *p < 0.0 { -tiny } else { tiny };
        }
    }

    let mut x = start;
    for _ in 0..4 {
        for i in 0..n.saturating_sub(1) {
            if swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= mult[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            if i + 1 < n {
                v -= u1[i] * x[i + 1];
            }
            if i + 2 < n {
                v -= u2[i] * x[i + 2];
            }
            x[i] = v / u0[i];
        }
        for q in against {
            let c = dot(&x, q);
            axpy(-c, q, &mut x);
        }
        let len = norm(&x);
        if !len.is_finite() || len <= 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= len);
    }
    x
}

/// Leading `k` eigenpairs: eigenvalues of the tridiagonal by QL without
/// vectors, eigenvectors by inverse iteration, then mapped back through the
/// Householder reflectors. Returns all eigenvalues (descending) and `k`
/// rows of `Vᵀ`.
fn sym_eig_top_rows(m: &Matrix, k: usize) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let n = check_symmetric(m)?;
    let k = k.min(n);
    let mut a = m.as_slice().to_vec();
    let (diag, off, betas) = tridiagonalize(&mut a, n);
    let mut values = diag.clone();
    let mut off_scratch = off.clone();
    tridiagonal_ql(&mut values, &mut off_scratch, None, n)?;
    values.sort_by(|x, y| y.total_cmp(x));

    let scale = diag
        .iter()
        .zip(&off)
        .map(|(d, e)| d.abs() + e.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    let cluster_gap = 1e-3 * scale;

    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut cluster_start = 0;
    for j in 0..k {
        if j > 0 && (values[j - 1] - values[j]).abs() > cluster_gap {
            cluster_start = j;
        }
        // Deterministic, index-dependent start with no exact symmetry.
        let start: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * (((i * 7919 + j * 104_729) % 1013) as f64 / 1013.0))
            .collect();
        let against: Vec<&[f64]> = vecs[cluster_start..j].iter().map(|v| v.as_slice()).collect();
        let v = tridiagonal_inverse_iteration(&diag, &off, values[j], start, &against, tiny);
        vecs.push(v);
    }

    let mut rows = Vec::with_capacity(n * k);
    for mut z in vecs {
        // Q = H_0 H_1 ... ; apply the last reflector first.
        for step in (0..betas.len()).rev() {
            let beta = betas[step];
            if beta == 0.0 {
                continue;
            }
            let lo = step + 1;
            let v = &a[step * n + lo..(step + 1) * n];
            let c = beta * dot(v, &z[lo..]);
            axpy(-c, v, &mut z[lo..]);
        }
        canonical_sign(&mut z);
        rows.extend_from_slice(&z);
    }
    Ok((values, rows))
}

/// Leading `k` eigenpairs of a symmetric matrix; eigenvectors as columns.
pub fn sym_eig_top(m: &Matrix, k: usize) -> Result<EigenResult, LinalgError> {
    let (mut eigenvalues, rows) = if 2 * k <= m.rows() {
        sym_eig_top_rows(m, k)?
    } else {
        sym_eig_rows(m)?
    };
    let n = m.rows();
    let k = k.min(n);
    eigenvalues.truncate(k);
    let vt = Matrix {
        rows: k,
        cols: n,
        data: rows[..n * k].to_vec(),
    };
    Ok(EigenResult {
        eigenvalues,
        eigenvectors: vt.transpose(),
    })
}

/// Symmetric eigendecomposition.
pub fn sym_eig(m: &Matrix) -> Result<EigenResult, LinalgError> {
    let (eigenvalues, rows) = sym_eig_rows(m)?;
    let n = eigenvalues.len();
    let vt = Matrix {
        rows: n,
        cols: n,
        data: rows,
    };
    Ok(EigenResult {
        eigenvalues,
        eigenvectors: vt.transpose(),
    })
}

/// Solves `A·w = λ·B·w` for symmetric `A` and symmetric positive-definite
/// `B`. Eigenvectors are `B`-orthonormal.
pub fn generalized_eig(a: &Matrix, b: &Matrix) -> Result<EigenResult, LinalgError> {
    generalized_eig_top(a, b, a.rows())
}

/// As [`generalized_eig`], but only the leading `k` eigenvectors are
/// back-transformed. All eigenvalues are still returned truncated to `k`.
pub fn generalized_eig_top(a: &Matrix, b: &Matrix, k: usize) -> Result<EigenResult, LinalgError> {
    let n = check_symmetric(a)?;
    if b.rows() != n || b.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: b.rows(),
        });
    }
    let k = k.min(n);
    let l = cholesky_spd(b)?;

    // C = L⁻¹ A L⁻ᵀ, computed as L⁻¹ (L⁻¹ A)ᵀ using the symmetry of A.
    let mut y = a.as_slice().to_vec();
    forward_substitute(&l, &mut y, n);
    let mut c = Matrix {
        rows: n,
        cols: n,
        data: y,
    }
    .transpose();
    forward_substitute(&l, &mut c.data, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (c.data[i * n + j] + c.data[j * n + i]);
            c.data[i * n + j] = avg;
            c.data[j * n + i] = avg;
        }
    }

    // Inverse iteration pays off when few vectors are needed.
    let (mut values, rows) = if 2 * k <= n { sym_eig_top_rows(&c, k)? } else { sym_eig_rows(&c)? };
    values.truncate(k);
    // U (n × k) from the first k rows of Uᵀ, then W = L⁻ᵀ U.
    let mut u = vec![0.0; n * k];
    for (j, r) in rows.chunks(n.max(1)).take(k).enumerate() {
        for (i, &v) in r.iter().enumerate() {
            u[i * k + j] = v;
        }
    }
    backward_substitute_transposed(&l, &mut u, k);
    let mut w = Matrix { rows: n, cols: k, data: u };
    for j in 0..k {
        if let Some(first) = (0..n).map(|i| w[(i, j)]).find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                w.negate_column(j);
            }
        }
    }
    Ok(EigenResult {
        eigenvalues: values,
        eigenvectors: w,
    })
}
