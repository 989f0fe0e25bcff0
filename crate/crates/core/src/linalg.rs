//! Small dense linear algebra kit: row-major symmetric matrices, Cholesky,
//! conjugate gradients and Householder least squares.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * *b;
        }
    }

    pub fn add_diagonal(&mut self, value: T) {
        for i in 0..self.n {
            self[(i, i)] = self[(i, i)] + value;
        }
    }

    /// In-place lower Cholesky factor; the strict upper triangle is zeroed.
    /// Pivots below `n * eps * max diagonal` count as singular.
    pub fn cholesky(mut self) -> Result<Cholesky<T>> {
        let n = self.n;
        let max_diag = (0..n).fold(T::zero(), |m, i| m.max(self.data[i * n + i].abs()));
        let floor = T::epsilon() * T::from_usize_lossy(n) * max_diag;
        for i in 0..n {
            let (done, rest) = self.data.split_at_mut(i * n);
            let row_i = &mut rest[..n];
            for j in 0..i {
                let row_j = &done[j * n..j * n + j + 1];
                row_i[j] = (row_i[j] - dot(&row_i[..j], &row_j[..j])) / row_j[j];
            }
            let d = row_i[i] - dot(&row_i[..i], &row_i[..i]);
            if !(d > floor) || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (pivot {i} = {d:e})"
                )));
            }
            row_i[i] = d.sqrt();
            for v in row_i[i + 1..].iter_mut() {
                *v = T::zero();
            }
        }
        Ok(Cholesky { l: self })
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            acc[l] = acc[l] + a[4 * k + l] * b[4 * k + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s = s + a[k] * b[k];
    }
    s
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: SquareMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(&self) -> &SquareMatrix<T> {
        &self.l
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            y[i] = (y[i] - dot(&row[..i], &y[..i])) / row[i];
        }
        for i in (0..n).rev() {
            let yi = y[i] / self.l[(i, i)];
            y[i] = yi;
            let row = self.l.row(i);
            for k in 0..i {
                y[k] = y[k] - row[k] * yi;
            }
        }
        y
    }

    /// `A^{-1} = L^{-T} L^{-1}`.
    pub fn inverse(&self) -> SquareMatrix<T> {
        let n = self.l.n;
        // Row i of X = L^{-1}: (e_i - sum_{k<i} L[i][k] X[k]) / L[i][i].
        let mut x = SquareMatrix::zeros(n);
        for i in 0..n {
            let (done, rest) = x.data.split_at_mut(i * n);
            let xi = &mut rest[..n];
            xi[i] = T::one();
            let li = self.l.row(i);
            for k in 0..i {
                if li[k] != T::zero() {
                    axpy(-li[k], &done[k * n..k * n + k + 1], &mut xi[..k + 1]);
                }
            }
            let d = li[i];
            for v in xi[..=i].iter_mut() {
                *v = *v / d;
            }
        }
        let mut inv = SquareMatrix::zeros(n);
        let s = n as isize;
        T::gemm(n, n, n, T::one(), &x.data, (1, s), &x.data, (s, 1), T::zero(), &mut inv.data, (s, 1));
        inv
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    pub relative_residual: T,
}

/// Solves `A x = b` for symmetric positive definite `A` given as an
/// operator `apply(v, out)`. Stops when `||r|| <= tol * ||b||`.
pub fn conjugate_gradient<T: Real>(
    mut apply: impl FnMut(&[T], &mut [T]),
    b: &[T],
    tol: T,
    max_iter: usize,
) -> Result<CgOutcome<T>> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![T::zero(); n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == T::zero() {
        return Ok(CgOutcome { solution: x, iterations: 0, relative_residual: T::zero() });
    }
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= tol * b_norm {
            return Ok(CgOutcome { solution: x, iterations: it, relative_residual: rr.sqrt() / b_norm });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::Numerical(format!(
                "conjugate gradient met a non-positive curvature {pap}; system is indefinite or singular"
            )));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = *ri + beta * *pi;
        }
        rr = rr_new;
    }
    let rel = rr.sqrt() / b_norm;
    if rel <= tol {
        Ok(CgOutcome { solution: x, iterations: max_iter, relative_residual: rel })
    } else {
        Err(Error::Numerical(format!(
            "conjugate gradient did not converge in {max_iter} iterations (relative residual {rel:e})"
        )))
    }
}

/// Least-squares solution of the `rows x cols` row-major system `A x = b`
/// by Householder QR. Fails when `A` is numerically rank deficient.
pub fn least_squares<T: Real>(a: &[T], rows: usize, cols: usize, b: &[T]) -> Result<Vec<T>> {
    if rows < cols {
        return Err(Error::Numerical(format!("{rows} equations for {cols} unknowns")));
    }
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    let scale = m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let rank_tol = T::lit(1e-10) * scale.max(T::min_positive_value()) * T::from_usize_lossy(rows);
    for k in 0..cols {
        let norm = (k..rows).map(|i| m[i * cols + k].powi(2)).sum::<T>().sqrt();
        if norm <= rank_tol {
            return Err(Error::Numerical(format!("rank deficient in column {k}")));
        }
        let alpha = if m[k * cols + k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..rows).map(|i| m[i * cols + k]).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().map(|x| x.powi(2)).sum::<T>();
        if vnorm2 == T::zero() {
            continue;
        }
        for j in k..cols {
            let s = (k..rows).map(|i| v[i - k] * m[i * cols + j]).sum::<T>() * T::lit(2.0) / vnorm2;
            for i in k..rows {
                m[i * cols + j] = m[i * cols + j] - s * v[i - k];
            }
        }
        let s = (k..rows).map(|i| v[i - k] * rhs[i]).sum::<T>() * T::lit(2.0) / vnorm2;
        for i in k..rows {
            rhs[i] = rhs[i] - s * v[i - k];
        }
        if m[k * cols + k].abs() <= rank_tol {
            return Err(Error::Numerical(format!("rank deficient in column {k}")));
        }
    }
    let mut x = vec![T::zero(); cols];
    for k in (0..cols).rev() {
        let s = ((k + 1)..cols).map(|j| m[k * cols + j] * x[j]).sum::<T>();
        x[k] = (rhs[k] - s) / m[k * cols + k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn spd(n: usize) -> SquareMatrix<f64> {
        let b = SquareMatrix::from_fn(n, |i, j| ((i * 7 + j * 3) as f64 * 0.31).sin());
        let mut a = SquareMatrix::from_fn(n, |i, j| dot(b.row(i), b.row(j)));
        a.add_diagonal(0.5);
        a
    }

    #[test]
    fn cholesky_solve_and_inverse() {
        let n = 23;
        let a = spd(n);
        let chol = a.clone().cholesky().unwrap();
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let x = chol.solve(&b);
        let ax = a.mul_vec(&x);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9);
        }
        let inv = chol.inverse();
        let na = DMatrix::from_row_slice(n, n, a.as_slice());
        let ninv = na.try_inverse().unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((inv[(i, j)] - ninv[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = SquareMatrix::<f64>::identity(3);
        a[(2, 2)] = -1.0;
        assert!(matches!(a.cholesky(), Err(Error::Numerical(_))));
    }

    #[test]
    fn cg_matches_direct() {
        let n = 40;
        let a = spd(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let out = conjugate_gradient(|v, o| o.copy_from_slice(&a.mul_vec(v)), &b, 1e-12, 10 * n).unwrap();
        let direct = a.clone().cholesky().unwrap().solve(&b);
        for (u, v) in out.solution.iter().zip(&direct) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn cg_reports_indefinite() {
        let b = vec![1.0, 1.0];
        let res = conjugate_gradient(|v: &[f64], o: &mut [f64]| { o[0] = v[0]; o[1] = -v[1]; }, &b, 1e-12, 10);
        assert!(res.is_err());
    }

    #[test]
    fn least_squares_matches_nalgebra() {
        let (rows, cols) = (30, 5);
        let a: Vec<f64> = (0..rows * cols).map(|k| ((k * 13 % 17) as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..rows).map(|k| k as f64 * 0.1).collect();
        let x = least_squares(&a, rows, cols, &b).unwrap();
        let na = DMatrix::from_row_slice(rows, cols, &a);
        let nb = DVector::from_vec(b);
        let ref_x = (na.transpose() * &na).try_inverse().unwrap() * na.transpose() * nb;
        for (u, v) in x.iter().zip(ref_x.iter()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn least_squares_rank_deficiency() {
        // Two identical columns.
        let a = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        assert!(least_squares(&a, 3, 2, &[1.0, 2.0, 3.0]).is_err());
    }
}
