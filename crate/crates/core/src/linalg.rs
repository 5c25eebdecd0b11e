//! Small dense kernels used by CLF synthesis and verification.
//!
//! Everything here targets desk-scale matrices (n <= 8). Nothing is blocked or
//! cache-aware.

use nalgebra::{DMatrix, DVector};

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: DVector<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
    pub sweeps: usize,
}

impl SymmetricEigen {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigenvalue iteration.
///
/// Only the symmetric part of `a` is used. Iterates until the off-diagonal
/// Frobenius norm drops below `tol * max(1, ||A||_F)`.
pub fn jacobi_eigen(a: &DMatrix<f64>, tol: f64) -> SymmetricEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "jacobi_eigen needs a square matrix");
    let mut m = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm().max(1.0);
    let mut sweeps = 0;

    while sweeps < JACOBI_MAX_SWEEPS && off_diagonal_norm(&m) > tol * scale {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
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
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

/// Default tolerance for eigenvalue checks.
pub const JACOBI_TOL: f64 = 1e-12;

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.amax().max(1.0);
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Coefficients `[1, c1, ..., cn]` of `det(sI - A) = s^n + c1 s^{n-1} + ... + cn`
/// by the Faddeev–LeVerrier recursion.
pub fn characteristic_polynomial(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0; n + 1];
    let identity = DMatrix::<f64>::identity(n, n);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + &identity * coeffs[k - 1];
        let am = a * &m;
        coeffs[k] = -am.trace() / k as f64;
    }
    coeffs
}

/// Evaluates `p(A) = A^n + c1 A^{n-1} + ... + cn I` by Horner's rule.
pub fn polynomial_of_matrix(coeffs: &[f64], a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let identity = DMatrix::<f64>::identity(n, n);
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for &c in coeffs {
        acc = &acc * a + &identity * c;
    }
    acc
}

/// Routh–Hurwitz test: all roots of the monic polynomial have negative real part.
///
/// A zero or sign change in the first column is reported as not Hurwitz; the
/// epsilon-substitution trick is deliberately not used because marginal
/// stability must be rejected anyway.
pub fn routh_hurwitz(coeffs: &[f64]) -> bool {
    if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
        return false;
    }
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return true;
    }
    let lead = coeffs[0];
    if lead == 0.0 {
        return false;
    }
    let norm: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    if norm.iter().any(|&c| c <= 0.0) {
        return false;
    }
    let width = degree / 2 + 1;
    let mut prev: Vec<f64> = (0..width)
        .map(|i| norm.get(2 * i).copied().unwrap_or(0.0))
        .collect();
    let mut curr: Vec<f64> = (0..width)
        .map(|i| norm.get(2 * i + 1).copied().unwrap_or(0.0))
        .collect();
    let scale = norm.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let zero_tol = 1e-14 * scale.max(1.0);

    for _ in 0..degree {
        if curr[0] <= zero_tol {
            return false;
        }
        let mut next = vec![0.0; width];
        for i in 0..width - 1 {
            next[i] = (curr[0] * prev[i + 1] - prev[0] * curr[i + 1]) / curr[0];
        }
        prev = curr;
        curr = next;
    }
    true
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    routh_hurwitz(&characteristic_polynomial(a))
}

/// Numerical rank from the singular values `sqrt(eig(M M^T))`, counting those
/// above `tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let gram = m * m.transpose();
    let eig = jacobi_eigen(&gram, JACOBI_TOL);
    let sigma: Vec<f64> = eig.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > tol * smax).count()
}

/// Kalman controllability matrix `[B, AB, ..., A^{n-1}B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut c = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        c.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    c
}

const HALTON_PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical-inverse Halton point in `[0,1)^dim`, index starting at 1.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= HALTON_PRIMES.len(), "halton dimension too large");
    HALTON_PRIMES[..dim]
        .iter()
        .map(|&base| {
            let base = base as u64;
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonal_is_fixed_point() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let e = jacobi_eigen(&a, JACOBI_TOL);
        assert_eq!(e.values.as_slice(), &[-1.0, 2.0, 3.0]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0]);
        let e = jacobi_eigen(&a, JACOBI_TOL);
        let rebuilt = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert!((rebuilt - &a).amax() < 1e-12);
        let ortho = e.vectors.transpose() * &e.vectors;
        assert!((ortho - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn char_poly_of_companion() {
        // s^2 + 3s + 2
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let c = characteristic_polynomial(&a);
        assert!((c[1] - 3.0).abs() < 1e-14 && (c[2] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn routh_cases() {
        assert!(routh_hurwitz(&[1.0, 3.0, 2.0]));
        assert!(!routh_hurwitz(&[1.0, 0.0, 1.0]));
        assert!(!routh_hurwitz(&[1.0, -1.0, 2.0]));
        // (s+1)(s+2)(s+3)
        assert!(routh_hurwitz(&[1.0, 6.0, 11.0, 6.0]));
        // s^3 + s^2 + s + 2 has a RHP pair
        assert!(!routh_hurwitz(&[1.0, 1.0, 1.0, 2.0]));
        // (s+1)^6
        assert!(routh_hurwitz(&[1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0]));
        // s^4 + s^3 + s^2 + s + 1: roots on the unit circle, two in RHP
        assert!(!routh_hurwitz(&[1.0, 1.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn rank_and_controllability() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(numerical_rank(&controllability_matrix(&a, &b), 1e-9), 2);
        let b_bad = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(numerical_rank(&controllability_matrix(&a, &b_bad), 1e-9), 1);
    }

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, 2), vec![0.25, 2.0 / 3.0]);
    }
}
