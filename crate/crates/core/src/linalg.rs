//! Minimal dense linear algebra over [`Real`] scalars.
//!
//! Reach estimation needs only small dense kernels: matrix products, a
//! symmetric positive-definite solve, symmetric eigenvalue extremes for rank
//! checks, and Gram-Schmidt orthonormalization. The matrices involved are a
//! tall decoder Jacobian (ambient dimension x latent dimension, with a small
//! latent dimension) and the latent-by-latent Gram matrix built from it, so
//! straightforward implementations are both adequate and easy to keep generic
//! over the scalar type.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

// ───────────────────────── vector helpers ─────────────────────────

/// Dot product of two equal-length slices.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

/// Squared Euclidean norm.
#[inline]
pub fn norm_sq<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

/// Euclidean norm.
#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

/// Euclidean distance between two equal-length slices.
#[inline]
pub fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        acc = acc + d * d;
    }
    acc.sqrt()
}

/// Component-wise `a - b` into a new vector.
#[inline]
pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

/// `y += alpha * x` in place.
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// True when every entry is finite.
#[inline]
pub fn all_finite<T: Real>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}

// ───────────────────────── dense matrix ─────────────────────────

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from a row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "Mat::from_vec",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    context: "Mat::from_rows",
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Mat { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Mutable row `i`.
    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Column `j` copied into a new vector.
    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Row-major view of the whole buffer.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `A x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `A^T x`.
    pub fn tr_matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            axpy(x[i], self.row(i), &mut out);
        }
        out
    }

    /// `A B`.
    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a_ik = self[(i, k)];
                if a_ik != T::zero() {
                    axpy(a_ik, other.row(k), out.row_mut(i));
                }
            }
        }
        out
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Gram matrix `A^T A` (cols x cols).
    pub fn gram(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let row = self.row(i);
            for a in 0..self.cols {
                let r_a = row[a];
                if r_a != T::zero() {
                    for b in 0..self.cols {
                        out[(a, b)] += r_a * row[b];
                    }
                }
            }
        }
        out
    }

    /// `A += alpha * u v^T`.
    pub fn add_outer(&mut self, alpha: T, u: &[T], v: &[T]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            axpy(alpha * u[i], v, self.row_mut(i));
        }
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        all_finite(&self.data)
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

// ───────────────────────── SPD solve ─────────────────────────

/// Cholesky factorization `A = L L^T` of a symmetric positive-definite matrix.
///
/// Returns `None` when the matrix is not numerically positive definite.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &Mat<T>) -> Option<Self> {
        assert_eq!(a.rows(), a.cols(), "Cholesky needs a square matrix");
        let n = a.rows();
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[(i, j)];
                for k in 0..j {
                    sum = sum - l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if sum <= T::zero() || !sum.is_finite() {
                        return None;
                    }
                    l[(i, j)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Some(Cholesky { l })
    }

    /// Solves `A x = b` by forward and back substitution.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        debug_assert_eq!(b.len(), n);
        // Forward: L y = b.
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum = sum - self.l[(i, k)] * y[k];
            }
            y[i] = sum / self.l[(i, i)];
        }
        // Back: L^T x = y.
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..n {
                sum = sum - self.l[(k, i)] * x[k];
            }
            x[i] = sum / self.l[(i, i)];
        }
        x
    }
}

// ───────────────────────── symmetric eigenvalues ─────────────────────────

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
///
/// The matrices this crate feeds in are small Gram matrices, for which Jacobi
/// is accurate and more than fast enough. Values are returned in ascending
/// order.
pub fn sym_eigenvalues<T: Real>(a: &Mat<T>) -> Vec<T> {
    assert_eq!(a.rows(), a.cols(), "eigenvalues need a square matrix");
    let n = a.rows();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a[(0, 0)]];
    }
    let mut m = a.clone();
    let off = |m: &Mat<T>| -> T {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s
    };
    let scale = (0..n)
        .map(|i| m[(i, i)].abs())
        .fold(T::zero(), T::max)
        .max(T::one());
    let tol = real::<T>(1e-30) * scale * scale;
    for _sweep in 0..64 {
        if off(&m) <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= real::<T>(1e-300) {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (real::<T>(2.0) * apq);
                let t = {
                    let denom = theta.abs() + (theta * theta + T::one()).sqrt();
                    let t = T::one() / denom;
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // Apply the rotation on rows/columns p and q.
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eigs: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    eigs
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes<T: Real>(a: &Mat<T>) -> (T, T) {
    let eigs = sym_eigenvalues(a);
    (eigs[0], *eigs.last().expect("non-empty matrix"))
}

// ───────────────────────── orthogonal matrices ─────────────────────────

/// Random orthogonal matrix obtained by orthonormalizing a Gaussian matrix
/// with modified Gram-Schmidt.
pub fn random_orthogonal<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat<T> {
    assert!(n > 0, "orthogonal matrix needs n > 0");
    loop {
        let mut cols: Vec<Vec<T>> = (0..n)
            .map(|_| {
                (0..n)
                    .map(|_| real::<T>(rng.sample::<f64, _>(StandardNormal)))
                    .collect()
            })
            .collect();
        if let Some(q) = orthonormalize(&mut cols) {
            let mut m = Mat::zeros(n, n);
            for (j, col) in q.iter().enumerate() {
                for (i, &v) in col.iter().enumerate() {
                    m[(i, j)] = v;
                }
            }
            return m;
        }
        // Degenerate draw (measure zero); sample again.
    }
}

/// Modified Gram-Schmidt on a set of column vectors; `None` when a column is
/// numerically dependent on its predecessors.
fn orthonormalize<T: Real>(cols: &mut [Vec<T>]) -> Option<Vec<Vec<T>>> {
    let mut q: Vec<Vec<T>> = Vec::with_capacity(cols.len());
    for col in cols.iter() {
        let mut v = col.clone();
        for prev in &q {
            let proj = dot(prev, &v);
            axpy(-proj, prev, &mut v);
        }
        // Second pass for numerical orthogonality.
        for prev in &q {
            let proj = dot(prev, &v);
            axpy(-proj, prev, &mut v);
        }
        let nv = norm(&v);
        if nv < real::<T>(1e-10) {
            return None;
        }
        for x in v.iter_mut() {
            *x /= nv;
        }
        q.push(v);
    }
    Some(q)
}
