//! Dense least squares for consequent estimation.

use crate::scalar::Scalar;

/// Regularization applied when the design matrix is rank deficient.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresSolution<T> {
    /// One coefficient vector per right-hand side.
    pub coefficients: Vec<Vec<T>>,
    /// True when the ridge fallback was used.
    pub regularized: bool,
}

/// Minimizes `‖A x − b‖²` for each right-hand side `b`.
///
/// Uses Householder QR; falls back to ridge-regularized normal equations
/// (λ = [`RIDGE_LAMBDA`]) when `A` is numerically rank deficient.
pub fn least_squares<T: Scalar>(a: &Matrix<T>, rhs: &[Vec<T>]) -> LeastSquaresSolution<T> {
    assert!(
        rhs.iter().all(|b| b.len() == a.rows),
        "rhs length must match rows"
    );
    if a.rows >= a.cols {
        if let Some(coefficients) = qr_solve(a, rhs) {
            return LeastSquaresSolution {
                coefficients,
                regularized: false,
            };
        }
    }
    LeastSquaresSolution {
        coefficients: ridge_solve(a, rhs, T::lit(RIDGE_LAMBDA)),
        regularized: true,
    }
}

fn qr_solve<T: Scalar>(a: &Matrix<T>, rhs: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let (m, n) = (a.rows, a.cols);
    let mut r = a.clone();
    let mut bs: Vec<Vec<T>> = rhs.to_vec();
    let mut diag_max = T::zero();
    for j in 0..n {
        let norm = (j..m).map(|i| r.get(i, j) * r.get(i, j)).sum::<T>().sqrt();
        if norm == T::zero() {
            return None;
        }
        let alpha = if r.get(j, j) > T::zero() { -norm } else { norm };
        // v = x - alpha e_1, stored in column j below the diagonal
        let mut v: Vec<T> = (j..m).map(|i| r.get(i, j)).collect();
        v[0] -= alpha;
        let vnorm_sq: T = v.iter().map(|&x| x * x).sum();
        if vnorm_sq > T::zero() {
            for col in j..n {
                let dot: T = (j..m).map(|i| v[i - j] * r.get(i, col)).sum();
                let f = T::lit(2.0) * dot / vnorm_sq;
                for i in j..m {
                    let updated = r.get(i, col) - f * v[i - j];
                    r.set(i, col, updated);
                }
            }
            for b in bs.iter_mut() {
                let dot: T = (j..m).map(|i| v[i - j] * b[i]).sum();
                let f = T::lit(2.0) * dot / vnorm_sq;
                for i in j..m {
                    b[i] -= f * v[i - j];
                }
            }
        }
        diag_max = diag_max.max(r.get(j, j).abs());
    }
    let tol = T::epsilon() * T::from_usize_lossy(m.max(n)) * T::lit(1e4) * diag_max;
    if (0..n).any(|j| r.get(j, j).abs() <= tol) {
        return None;
    }
    Some(
        bs.iter()
            .map(|b| {
                let mut x = vec![T::zero(); n];
                for j in (0..n).rev() {
                    let s: T = ((j + 1)..n).map(|c| r.get(j, c) * x[c]).sum();
                    x[j] = (b[j] - s) / r.get(j, j);
                }
                x
            })
            .collect(),
    )
}

fn ridge_solve<T: Scalar>(a: &Matrix<T>, rhs: &[Vec<T>], lambda: T) -> Vec<Vec<T>> {
    let n = a.cols;
    let mut gram = Matrix::zeros(n, n);
    for p in 0..n {
        for q in p..n {
            let s: T = (0..a.rows).map(|i| a.get(i, p) * a.get(i, q)).sum();
            gram.set(p, q, s);
            gram.set(q, p, s);
        }
        let d = gram.get(p, p) + lambda;
        gram.set(p, p, d);
    }
    let chol = cholesky(&gram);
    rhs.iter()
        .map(|b| {
            let atb: Vec<T> = (0..n)
                .map(|p| (0..a.rows).map(|i| a.get(i, p) * b[i]).sum())
                .collect();
            cholesky_solve(&chol, &atb)
        })
        .collect()
}

/// Lower-triangular factor of a symmetric positive definite matrix.
fn cholesky<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: T = (0..j).map(|k| l.get(i, k) * l.get(j, k)).sum();
            if i == j {
                let d = (m.get(i, i) - s).max(T::min_positive_value());
                l.set(i, j, d.sqrt());
            } else {
                l.set(i, j, (m.get(i, j) - s) / l.get(j, j));
            }
        }
    }
    l
}

fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows;
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let s: T = (0..i).map(|k| l.get(i, k) * y[k]).sum();
        y[i] = (b[i] - s) / l.get(i, i);
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let s: T = ((i + 1)..n).map(|k| l.get(k, i) * x[k]).sum();
        x[i] = (y[i] - s) / l.get(i, i);
    }
    x
}
