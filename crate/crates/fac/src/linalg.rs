//! Dense linear algebra at desk scale.
//!
//! Every system in this crate is small (dimension ≈ |S|·|A| at most), so the
//! implementations favor clarity and exact reproducibility over speed:
//! row-major matrices backed by `Vec`, LU factorization with partial
//! pivoting, and cyclic Jacobi sweeps for symmetric eigenvalues.
//!
//! Ill-conditioning is surfaced rather than silently absorbed: elimination
//! fails with [`SingularSystem`] when the pivot spread exceeds
//! [`PIVOT_RATIO_LIMIT`], a cheap and reliable proxy for the condition number
//! at these sizes.

use crate::scalar::Real;
use std::ops::{Index, IndexMut};

/// Pivot-magnitude spread beyond which elimination reports [`SingularSystem`].
pub const PIVOT_RATIO_LIMIT: f64 = 1e12;

/// The coefficient matrix of a linear solve was singular or so
/// ill-conditioned that the solution would be numerically meaningless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("linear system is singular or ill-conditioned")]
pub struct SingularSystem;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Mat<F> {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    /// Builds a matrix by evaluating `f(row, col)` at every position.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Matrix-vector product.
    ///
    /// # Panics
    ///
    /// Panics if `v.len() != self.cols()`.
    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.cols, "matvec: dimension mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Mat<F> {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Matrix product `self * other`.
    ///
    /// # Panics
    ///
    /// Panics if the inner dimensions disagree.
    pub fn matmul(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, other.rows, "matmul: dimension mismatch");
        Mat::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self[(i, k)] * other[(k, j)]).sum()
        })
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> F {
        self.data.iter().map(|&x| x * x).sum::<F>().sqrt()
    }
}

impl<F> Index<(usize, usize)> for Mat<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<F> IndexMut<(usize, usize)> for Mat<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct LuFactor<F> {
    n: usize,
    /// Packed L (unit lower, below diagonal) and U (upper, including diagonal).
    lu: Vec<F>,
    /// Row permutation applied to the input: row `i` of `U` came from
    /// input row `perm[i]`.
    perm: Vec<usize>,
}

impl<F: Real> LuFactor<F> {
    /// Factors a square matrix.
    ///
    /// # Errors
    ///
    /// [`SingularSystem`] if a pivot vanishes or the ratio of the largest to
    /// smallest pivot magnitude exceeds [`PIVOT_RATIO_LIMIT`].
    ///
    /// # Panics
    ///
    /// Panics if `a` is not square or is empty.
    pub fn new(a: &Mat<F>) -> Result<Self, SingularSystem> {
        assert_eq!(a.rows, a.cols, "LU factorization needs a square matrix");
        assert!(a.rows > 0, "LU factorization needs a nonempty matrix");
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        let mut max_pivot = F::zero();
        let mut min_pivot = F::infinity();
        for k in 0..n {
            // Partial pivoting: bring the largest remaining entry of column k
            // to the diagonal.
            let mut best = k;
            let mut best_abs = lu[k * n + k].abs();
            for r in (k + 1)..n {
                let v = lu[r * n + k].abs();
                if v > best_abs {
                    best = r;
                    best_abs = v;
                }
            }
            if best != k {
                for c in 0..n {
                    lu.swap(k * n + c, best * n + c);
                }
                perm.swap(k, best);
            }
            let pivot = lu[k * n + k];
            let pivot_abs = pivot.abs();
            max_pivot = max_pivot.max(pivot_abs);
            min_pivot = min_pivot.min(pivot_abs);
            if pivot_abs == F::zero()
                || min_pivot < max_pivot / F::of(PIVOT_RATIO_LIMIT)
            {
                return Err(SingularSystem);
            }
            for r in (k + 1)..n {
                let factor = lu[r * n + k] / pivot;
                lu[r * n + k] = factor;
                for c in (k + 1)..n {
                    let sub = factor * lu[k * n + c];
                    lu[r * n + c] = lu[r * n + c] - sub;
                }
            }
        }
        Ok(LuFactor { n, lu, perm })
    }

    /// Solves `A x = b` for one right-hand side.
    ///
    /// # Panics
    ///
    /// Panics if `b.len()` differs from the matrix order.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        assert_eq!(b.len(), self.n, "solve: right-hand side length mismatch");
        let n = self.n;
        // Forward substitution on the permuted right-hand side.
        let mut x: Vec<F> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc = acc - self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        // Back substitution.
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc = acc - self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }
}

/// One-shot solve of `A x = b` by partial-pivoting elimination.
///
/// # Errors
///
/// [`SingularSystem`] when the matrix is singular or ill-conditioned.
pub fn solve<F: Real>(a: &Mat<F>, b: &[F]) -> Result<Vec<F>, SingularSystem> {
    Ok(LuFactor::new(a)?.solve(b))
}

/// Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi sweeps.
///
/// Accurate to roughly `‖A‖·1e-14` at the sizes used here.
///
/// # Panics
///
/// Panics if `a` is not square or deviates visibly from symmetry.
pub fn symmetric_eigenvalues<F: Real>(a: &Mat<F>) -> Vec<F> {
    assert_eq!(a.rows, a.cols, "eigenvalues need a square matrix");
    let n = a.rows;
    let scale = a.frobenius_norm().max(F::one());
    for i in 0..n {
        for j in (i + 1)..n {
            assert!(
                (a[(i, j)] - a[(j, i)]).abs() <= scale * F::of(1e-9),
                "matrix is not symmetric"
            );
        }
    }
    let mut m = a.clone();
    let tol = scale * F::of(1e-15);
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let mut off = F::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off + m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * F::of(1e-2) {
                    continue;
                }
                // Classic two-sided Jacobi rotation zeroing m[(p, q)].
                let theta = (m[(q, q)] - m[(p, p)]) / (F::of(2.0) * apq);
                let t = {
                    let sign = if theta >= F::zero() { F::one() } else { -F::one() };
                    sign / (theta.abs() + (theta * theta + F::one()).sqrt())
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
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
    let mut eigs: Vec<F> = (0..n).map(|i| m[(i, i)]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues must be finite"));
    eigs
}

/// Smallest singular value of a square matrix, via the eigenvalues of `AᵀA`.
pub fn min_singular_value<F: Real>(a: &Mat<F>) -> F {
    let gram = a.transpose().matmul(a);
    let eigs = symmetric_eigenvalues(&gram);
    eigs[0].max(F::zero()).sqrt()
}
