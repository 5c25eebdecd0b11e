//! Quadratic CLF synthesis for linear-nominal systems and the projected
//! (Finsler) matrix inequality `B_perp (A P + P A^T + lambda P) B_perp^T <= 0`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    controllability_matrix, is_hurwitz, is_symmetric, jacobi_eigen, numerical_rank,
    polynomial_of_matrix, JACOBI_TOL,
};

/// Gram determinant below which `B` is treated as rank deficient.
pub const GRAM_DET_TOL: f64 = 1e-12;
/// Relative residual accepted from the Lyapunov solve.
pub const LYAPUNOV_REL_RESIDUAL: f64 = 1e-9;
/// Largest admissible eigenvalue of the projected inequality.
pub const CERTIFICATE_TOL: f64 = 1e-8;
/// Kalman rank tolerance (relative to the largest singular value).
pub const CONTROLLABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct FinslerCertificate {
    pub p: DMatrix<f64>,
    pub lambda: f64,
    pub annihilator: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub max_eig_residual: f64,
}

impl FinslerCertificate {
    /// `P^{-1}`, the metric of the CLF `V = x^T P^{-1} x`.
    pub fn metric(&self) -> Result<DMatrix<f64>> {
        let inv = self.p.clone().try_inverse().ok_or(Error::SolveSingular)?;
        Ok((&inv + inv.transpose()) * 0.5)
    }
}

/// Orthonormal rows spanning the left null space of `B` (`B_perp B = 0`).
pub fn annihilator(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = b.shape();
    if m > n {
        return Err(Error::RankDeficient { gram_det: 0.0 });
    }
    let gram_det = (b.transpose() * b).determinant();
    if !(gram_det > GRAM_DET_TOL) {
        return Err(Error::RankDeficient { gram_det });
    }

    // Orthonormal basis of range(B), then greedily complete it from the
    // coordinate axes with the largest remaining component.
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..m {
        let mut v = b.column(j).into_owned();
        orthogonalize(&mut v, &basis);
        let norm = v.norm();
        if norm <= 1e-14 {
            return Err(Error::RankDeficient { gram_det });
        }
        basis.push(v / norm);
    }
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(n - m);
    while rows.len() < n - m {
        let mut best: Option<DVector<f64>> = None;
        let mut best_norm = 0.0;
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            orthogonalize(&mut e, &basis);
            let norm = e.norm();
            if norm > best_norm + 1e-12 {
                best_norm = norm;
                best = Some(e);
            }
        }
        let v = best.expect("complement direction must exist") / best_norm;
        basis.push(v.clone());
        rows.push(v);
    }
    let mut out = DMatrix::zeros(n - m, n);
    for (i, r) in rows.iter().enumerate() {
        out.set_row(i, &r.transpose());
    }
    Ok(out)
}

/// Two passes of modified Gram–Schmidt against `basis`.
fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
    for x in v.iter_mut() {
        if x.abs() < 1e-15 {
            *x = 0.0;
        }
    }
}

/// Solves `M P + P M^T + Q = 0` by Kronecker vectorization.
pub fn solve_lyapunov(m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    check_dim("Lyapunov M columns", n, m.ncols())?;
    check_dim("Lyapunov Q rows", n, q.nrows())?;
    check_dim("Lyapunov Q columns", n, q.ncols())?;
    if !is_hurwitz(m) {
        return Err(Error::NotHurwitz);
    }
    let identity = DMatrix::<f64>::identity(n, n);
    let kron = identity.kronecker(m) + m.kronecker(&identity);
    let rhs = -DVector::from_column_slice(q.as_slice());

    let lu = kron.lu();
    let u = lu.u();
    let diag = u.diagonal();
    let dmax = diag.amax();
    let dmin = diag.iter().fold(f64::INFINITY, |a, d| a.min(d.abs()));
    if !(dmax > 0.0) || dmin < 1e-14 * dmax {
        return Err(Error::SolveSingular);
    }
    let sol = lu.solve(&rhs).ok_or(Error::SolveSingular)?;
    let mut p = DMatrix::from_column_slice(n, n, sol.as_slice());
    p = (&p + p.transpose()) * 0.5;
    // Iterative refinement against the residual of the symmetrized solution.
    let mut best = lyapunov_residual(m, &p, q);
    for _ in 0..3 {
        let r = m * &p + &p * m.transpose() + q;
        let Some(c) = lu.solve(&-DVector::from_column_slice(r.as_slice())) else {
            break;
        };
        let c = DMatrix::from_column_slice(n, n, c.as_slice());
        let next = &p + (&c + c.transpose()) * 0.5;
        let res = lyapunov_residual(m, &next, q);
        if !(res < best) {
            break;
        }
        p = next;
        best = res;
    }
    Ok(p)
}

/// `||M P + P M^T + Q||_inf` (max abs entry).
pub fn lyapunov_residual(m: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (m * p + p * m.transpose() + q).amax()
}

/// Ackermann gain `k` such that `A - b k^T` has the characteristic
/// polynomial `desired` (monic coefficients, highest power first).
pub fn ackermann(a: &DMatrix<f64>, b: &DVector<f64>, desired: &[f64]) -> Result<DVector<f64>> {
    let n = a.nrows();
    let bm = DMatrix::from_column_slice(n, 1, b.as_slice());
    let ctrb = controllability_matrix(a, &bm);
    if numerical_rank(&ctrb, CONTROLLABILITY_TOL) < n {
        return Err(Error::NotControllable);
    }
    let ctrb_inv = ctrb.try_inverse().ok_or(Error::NotControllable)?;
    let phi = polynomial_of_matrix(desired, a);
    let last_row = ctrb_inv.row(n - 1).into_owned();
    Ok((last_row * phi).transpose())
}

/// Monic polynomial with the given real roots.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci * r;
        }
        c = next;
    }
    c
}

/// Builds `P` satisfying the projected inequality via pole placement and a
/// Lyapunov solve. `seed` drives the input mixing when `m > 1`.
pub fn synthesize_p(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64, seed: u64) -> Result<FinslerCertificate> {
    let (n, m) = b.shape();
    check_dim("A columns", n, a.ncols())?;
    check_dim("A rows", n, a.nrows())?;
    if !(lambda > 0.0) {
        return Err(Error::validation("lambda", "must be positive"));
    }
    let ctrb = controllability_matrix(a, b);
    if numerical_rank(&ctrb, CONTROLLABILITY_TOL) < n {
        return Err(Error::NotControllable);
    }
    let b_perp = annihilator(b)?;
    let shift = 0.5 * lambda;

    let gain = if m == n {
        // Full actuation: cancel A and assign -(lambda/2 + 1) I.
        let b_inv = b.clone().try_inverse().ok_or(Error::NotControllable)?;
        -(b_inv * (a + DMatrix::<f64>::identity(n, n) * (shift + 1.0)))
    } else {
        let poles: Vec<f64> = (1..=n).map(|k| -shift - k as f64).collect();
        let desired = poly_from_roots(&poles);
        if m == 1 {
            let k = ackermann(a, &b.column(0).into_owned(), &desired)?;
            -DMatrix::from_row_slice(1, n, k.as_slice())
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut found = None;
            for _ in 0..16 {
                let g = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
                let bg = b * &g;
                if let Ok(k) = ackermann(a, &bg, &desired) {
                    found = Some(-(&g * k.transpose()));
                    break;
                }
            }
            found.ok_or(Error::NotControllable)?
        }
    };

    let closed = a + b * &gain;
    let shifted = &closed + DMatrix::<f64>::identity(n, n) * shift;
    let q = DMatrix::<f64>::identity(n, n);
    let p = solve_lyapunov(&shifted, &q)?;
    let rel = lyapunov_residual(&shifted, &p, &q) / q.amax();
    if !(rel <= LYAPUNOV_REL_RESIDUAL) {
        return Err(Error::CertificateFailed { residual: rel });
    }
    let p_eig = jacobi_eigen(&p, JACOBI_TOL);
    if !(p_eig.min() > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig: p_eig.min() });
    }
    let residual = projected_max_eig(a, &b_perp, &p, lambda);
    if !(residual <= CERTIFICATE_TOL) {
        return Err(Error::CertificateFailed { residual });
    }
    Ok(FinslerCertificate {
        p,
        lambda,
        annihilator: b_perp,
        gain,
        max_eig_residual: residual,
    })
}

fn projected_max_eig(a: &DMatrix<f64>, b_perp: &DMatrix<f64>, p: &DMatrix<f64>, lambda: f64) -> f64 {
    if b_perp.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let s = a * p + p * a.transpose() + p * lambda;
    let proj = b_perp * s * b_perp.transpose();
    let sym = (&proj + proj.transpose()) * 0.5;
    jacobi_eigen(&sym, JACOBI_TOL).max()
}

/// Largest eigenvalue of `Sym(B_perp (A P + P A^T + lambda P) B_perp^T)`.
///
/// Returns `+inf` for non-finite input or a rank-deficient `B`, and `-inf` when
/// `B` is square (no unactuated directions).
pub fn verify_finsler(a: &DMatrix<f64>, b: &DMatrix<f64>, p: &DMatrix<f64>, lambda: f64) -> f64 {
    let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
    if !finite(a) || !finite(b) || !finite(p) || !lambda.is_finite() || !is_symmetric(p, 1e-9) {
        return f64::INFINITY;
    }
    match annihilator(b) {
        Ok(b_perp) => projected_max_eig(a, &b_perp, p, lambda),
        Err(_) => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::example1_matrices;

    #[test]
    fn annihilator_coordinate_basis() {
        let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
        let bp = annihilator(&b).unwrap();
        assert_eq!(bp.shape(), (3, 4));
        let expect = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(bp, expect);
    }

    #[test]
    fn annihilator_square_is_empty() {
        let bp = annihilator(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(bp.shape(), (0, 3));
    }

    #[test]
    fn annihilator_diagonal_direction() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = DMatrix::from_column_slice(2, 1, &[s, s]);
        let bp = annihilator(&b).unwrap();
        assert!((bp[(0, 0)].abs() - s).abs() < 1e-15);
        assert!((bp[(0, 0)] + bp[(0, 1)]).abs() < 1e-15);
    }

    #[test]
    fn annihilator_rank_deficient() {
        let b = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(matches!(annihilator(&b), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn lyapunov_trivial_cases() {
        let p = solve_lyapunov(&(-DMatrix::<f64>::identity(2, 2)), &(DMatrix::identity(2, 2) * 2.0)).unwrap();
        assert!((p - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);

        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let p = solve_lyapunov(&m, &q).unwrap();
        assert!((p - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(solve_lyapunov(&m, &DMatrix::identity(2, 2)), Err(Error::NotHurwitz)));
    }

    #[test]
    fn scalar_synthesis_closed_form() {
        let a = DMatrix::zeros(1, 1);
        let b = DMatrix::from_element(1, 1, 1.0);
        let cert = synthesize_p(&a, &b, 1.0, 0).unwrap();
        assert!((cert.gain[(0, 0)] + 1.5).abs() < 1e-14);
        assert!((cert.p[(0, 0)] - 0.5).abs() < 1e-14);
        assert!(cert.max_eig_residual <= CERTIFICATE_TOL);
    }

    #[test]
    fn example1_certificate() {
        let (a, b) = example1_matrices();
        let cert = synthesize_p(&a, &b, 1.0, 0).unwrap();
        assert!(cert.max_eig_residual <= 1e-8);
        assert!((verify_finsler(&a, &b, &cert.p, 1.0) - cert.max_eig_residual).abs() < 1e-12);
    }

    #[test]
    fn full_actuation_is_vacuous() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -2.0, 0.7]);
        let cert = synthesize_p(&a, &DMatrix::identity(2, 2), 1.0, 0).unwrap();
        assert_eq!(cert.annihilator.nrows(), 0);
        assert_eq!(cert.max_eig_residual, f64::NEG_INFINITY);
    }

    #[test]
    fn verify_detects_violation() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let r = verify_finsler(&a, &b, &DMatrix::identity(2, 2), 0.0);
        assert!((r - 2.0).abs() < 1e-14);
    }

    #[test]
    fn verify_hurwitz_identity_metric() {
        // A + A^T + lambda I <= 0 already before projection.
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, -1.0, -3.0]);
        for b in [
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.6, 0.8]),
        ] {
            assert!(verify_finsler(&a, &b, &DMatrix::identity(2, 2), 1.0) <= 0.0);
        }
        assert_eq!(verify_finsler(&a, &DMatrix::from_column_slice(2, 1, &[f64::NAN, 1.0]), &DMatrix::identity(2, 2), 1.0), f64::INFINITY);
    }

    #[test]
    fn uncontrollable_pair_rejected() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(matches!(synthesize_p(&a, &b, 1.0, 0), Err(Error::NotControllable)));
    }

    #[test]
    fn poly_roots_expand() {
        assert_eq!(poly_from_roots(&[-1.0, -2.0]), vec![1.0, 3.0, 2.0]);
    }
}
