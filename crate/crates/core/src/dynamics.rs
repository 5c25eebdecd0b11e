//! Uncertain plants of the form `x' = f(x) + Delta(x)^T theta + B(x) u`.
//!
//! The regressor `Delta(x)` is always stored as a `p x n` matrix so that
//! `Delta(x)^T theta` is an `n`-vector.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Half-width of the default evaluation box `||x||_inf <= 1e3`.
pub const DEFAULT_EVAL_BOX: f64 = 1e3;

pub trait UncertainSystem: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn param_dim(&self) -> usize;

    /// `f(x)`, length `n`.
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `Delta(x)`, shape `p x n`.
    fn regressor(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// `B(x)`, shape `n x m`.
    fn input_map(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Half-width of the box in which the evaluators are guaranteed finite.
    fn eval_box(&self) -> f64 {
        DEFAULT_EVAL_BOX
    }

    /// Nominal linear pair `(A, B)` used to synthesize a quadratic metric,
    /// when the system has one.
    fn nominal_linear_pair(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }
}

pub type SharedSystem = Arc<dyn UncertainSystem>;

/// Per-component bounds standing in for the parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        ParamBox { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(t, (lo, hi))| t >= lo && t <= hi)
    }

    /// Grows every side by `fraction` of its half-width about the center.
    pub fn inflated(&self, fraction: f64) -> ParamBox {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(&lo, &hi)| {
                let c = 0.5 * (lo + hi);
                let h = 0.5 * (hi - lo) * (1.0 + fraction);
                (c - h, c + h)
            })
            .unzip();
        ParamBox { lo, hi }
    }

    /// Maps a point of the unit cube into the box.
    pub fn lerp(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (lo, hi))| lo + u * (hi - lo))
            .collect()
    }
}

/// The unknown plant parameters together with an optional admissible box.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameters {
    pub theta: DVector<f64>,
    pub admissible_box: Option<ParamBox>,
}

impl TrueParameters {
    pub fn new(theta: DVector<f64>, admissible_box: Option<ParamBox>) -> Result<Self> {
        if let Some(b) = &admissible_box {
            check_dim("admissible_box", theta.len(), b.dim())?;
            if !b.contains(theta.as_slice()) {
                return Err(Error::validation(
                    "theta_true",
                    format!("{:?} lies outside the admissible box", theta.as_slice()),
                ));
            }
        }
        Ok(TrueParameters {
            theta,
            admissible_box,
        })
    }
}

/// `f(x) + Delta(x)^T theta + B(x) u`.
pub fn eval_plant(
    sys: &dyn UncertainSystem,
    x: &DVector<f64>,
    theta: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim("state", sys.state_dim(), x.len())?;
    check_dim("theta", sys.param_dim(), theta.len())?;
    check_dim("input", sys.input_dim(), u.len())?;
    let non_finite = || Error::NonFiniteDynamics {
        x: x.as_slice().to_vec(),
    };
    if x.iter().any(|v| !v.is_finite()) || x.amax() > sys.eval_box() {
        return Err(non_finite());
    }
    let xdot = sys.drift(x) + sys.regressor(x).transpose() * theta + sys.input_map(x) * u;
    if xdot.iter().all(|v| v.is_finite()) {
        Ok(xdot)
    } else {
        Err(non_finite())
    }
}

/// `x' = theta |x| + u`.
#[derive(Debug, Clone, Default)]
pub struct ScalarAbs;

pub fn make_scalar_example() -> ScalarAbs {
    ScalarAbs
}

impl UncertainSystem for ScalarAbs {
    fn name(&self) -> &str {
        "scalar"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn drift(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn regressor(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x[0].abs())
    }
    fn input_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }
    fn nominal_linear_pair(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)))
    }
}

/// Scalar basis functions for user-assembled scalar plants `x' = Delta(x)^T theta + u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarBasis {
    Sin,
    Cos,
    X,
    X2,
    X3,
    Abs,
    Const,
}

impl ScalarBasis {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ScalarBasis::Sin => x.sin(),
            ScalarBasis::Cos => x.cos(),
            ScalarBasis::X => x,
            ScalarBasis::X2 => x * x,
            ScalarBasis::X3 => x * x * x,
            ScalarBasis::Abs => x.abs(),
            ScalarBasis::Const => 1.0,
        }
    }
}

/// Scalar plant with zero drift, unit input gain and a regressor built from
/// [`ScalarBasis`] terms. Covers `x' = theta x^2 + u` and the vanishing-degree
/// test systems.
#[derive(Debug, Clone)]
pub struct ScalarCustom {
    pub basis: Vec<ScalarBasis>,
}

impl ScalarCustom {
    pub fn new(basis: Vec<ScalarBasis>) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::validation("system.regressor", "needs at least one basis term"));
        }
        Ok(ScalarCustom { basis })
    }
}

impl UncertainSystem for ScalarCustom {
    fn name(&self) -> &str {
        "custom"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        self.basis.len()
    }
    fn drift(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }
    fn regressor(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_iterator(self.basis.len(), 1, self.basis.iter().map(|b| b.eval(x[0])))
    }
    fn input_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }
    fn nominal_linear_pair(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)))
    }
}

/// Linear nominal part with matched nonlinear uncertainty:
/// `x' = A x + B (u + phi(x)^T theta)`, `phi(x) = (x1^2, atan x2, x3, atan x4)`.
#[derive(Debug, Clone)]
pub struct MatchedLinear {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl MatchedLinear {
    pub fn phi(x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0] * x[0], x[1].atan(), x[2], x[3].atan()])
    }
}

pub fn example1_matrices() -> (DMatrix<f64>, DMatrix<f64>) {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0,  1.0,  1.0, 0.0,
        0.0, -1.0,  1.0, 1.0,
        0.0,  0.0, -1.0, 1.0,
        0.0,  0.0,  0.0, 0.0,
    ]);
    let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
    (a, b)
}

pub fn make_example1() -> MatchedLinear {
    let (a, b) = example1_matrices();
    MatchedLinear { a, b }
}

impl UncertainSystem for MatchedLinear {
    fn name(&self) -> &str {
        "example1"
    }
    fn state_dim(&self) -> usize {
        4
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        4
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }
    fn regressor(&self, x: &DVector<f64>) -> DMatrix<f64> {
        // Delta^T = B phi^T  =>  Delta = phi B^T
        Self::phi(x) * self.b.transpose()
    }
    fn input_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.b.clone()
    }
    fn nominal_linear_pair(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((self.a.clone(), self.b.clone()))
    }
}

/// Parametric strict-feedback plant
/// `x1' = x2 + theta^T phi1(x1)`, `x2' = theta^T phi2(x1, x2) + u`.
#[derive(Debug, Clone, Default)]
pub struct StrictFeedback;

pub fn make_example2() -> StrictFeedback {
    StrictFeedback
}

impl StrictFeedback {
    pub fn phi1(x1: f64) -> DVector<f64> {
        DVector::from_vec(vec![x1.sin(), x1.atan(), 0.0, 0.0])
    }

    /// Derivative of `phi1` with respect to `x1`.
    pub fn phi1_prime(x1: f64) -> DVector<f64> {
        DVector::from_vec(vec![x1.cos(), 1.0 / (1.0 + x1 * x1), 0.0, 0.0])
    }

    pub fn phi2(x1: f64, x2: f64) -> DVector<f64> {
        DVector::from_vec(vec![0.0, 0.0, x1.sin(), x2.atan()])
    }
}

impl UncertainSystem for StrictFeedback {
    fn name(&self) -> &str {
        "example2"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        4
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[1], 0.0])
    }
    fn regressor(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(4, 2);
        d.set_column(0, &Self::phi1(x[0]));
        d.set_column(1, &Self::phi2(x[0], x[1]));
        d
    }
    fn input_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
    }
}

/// Single-link manipulator with a flexible joint.
#[derive(Debug, Clone, Default)]
pub struct FlexibleJoint;

pub fn make_example3() -> FlexibleJoint {
    FlexibleJoint
}

/// Integrator chain used to synthesize the metric of the feedback-linearized
/// manipulator.
pub fn integrator_chain(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    (a, b)
}

impl UncertainSystem for FlexibleJoint {
    fn name(&self) -> &str {
        "example3"
    }
    fn state_dim(&self) -> usize {
        4
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        4
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[1], 0.0, x[3], 0.0])
    }
    fn regressor(&self, x: &DVector<f64>) -> DMatrix<f64> {
        // Delta^T rows: x2' gets (sin x1, x3 - x1, 0, 0), x4' gets (0, 0, x1 - x3, x4).
        let mut d = DMatrix::zeros(4, 4);
        d[(0, 1)] = x[0].sin();
        d[(1, 1)] = x[2] - x[0];
        d[(2, 3)] = x[0] - x[2];
        d[(3, 3)] = x[3];
        d
    }
    fn input_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0])
    }
    fn nominal_linear_pair(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some(integrator_chain(4))
    }
}

/// Whether `Delta(x)^T theta` lies in the column span of `B(x)`, to `tol`.
pub fn is_matched_at(sys: &dyn UncertainSystem, x: &DVector<f64>, theta: &DVector<f64>, tol: f64) -> bool {
    let w = sys.regressor(x).transpose() * theta;
    let b = sys.input_map(x);
    // residual of least-squares projection onto span(B)
    let gram = b.transpose() * &b;
    let Some(inv) = gram.try_inverse() else {
        return w.amax() <= tol;
    };
    let proj = &b * (inv * (b.transpose() * &w));
    (w - proj).amax() <= tol * (1.0 + theta.amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn scalar_example_values() {
        let s = make_scalar_example();
        assert_eq!(eval_plant(&s, &v(&[1.0]), &v(&[0.5]), &v(&[0.0])).unwrap()[0], 0.5);
        assert_eq!(eval_plant(&s, &v(&[-2.0]), &v(&[1.0]), &v(&[0.0])).unwrap()[0], 2.0);
        assert_eq!(eval_plant(&s, &v(&[0.0]), &v(&[7.0]), &v(&[0.0])).unwrap()[0], 0.0);
        assert_eq!(eval_plant(&s, &v(&[1.0]), &v(&[0.5]), &v(&[-0.5])).unwrap()[0], 0.0);
    }

    #[test]
    fn cancellation_gives_zero() {
        let s = make_example3();
        let x = v(&[0.3, -0.2, 0.7, 0.1]);
        let th = v(&[1.0, 2.0, 3.0, 0.5]);
        let w = s.drift(&x) + s.regressor(&x).transpose() * &th;
        // B = e4: only the last channel is actuated.
        let u = v(&[-w[3]]);
        let xd = eval_plant(&s, &x, &th, &u).unwrap();
        assert_eq!(xd[3], 0.0);

        let s0 = make_scalar_example();
        let x = v(&[-1.7]);
        let th = v(&[0.9]);
        let u = v(&[-(0.9 * 1.7)]);
        assert_eq!(eval_plant(&s0, &x, &th, &u).unwrap()[0], 0.0);
    }

    #[test]
    fn example1_against_hand_evaluation() {
        let s = make_example1();
        let x = v(&[1.0, 1.5, 1.5, 1.5]);
        let th = v(&[0.5, 1.0, 1.0, 1.0]);
        let xd = eval_plant(&s, &x, &th, &v(&[0.0])).unwrap();
        // Rows of A x: (1.5+1.5, -1.5+1.5+1.5, -1.5+1.5, 0); last row gains phi^T theta.
        let phi_theta = 0.5 * 1.0 + 1.5_f64.atan() + 1.5 + 1.5_f64.atan();
        let expect = [3.0, 1.5, 0.0, phi_theta];
        for i in 0..4 {
            assert!((xd[i] - expect[i]).abs() < 1e-15, "row {i}");
        }
    }

    #[test]
    fn example1_phi_and_matching() {
        let phi = MatchedLinear::phi(&v(&[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(phi.as_slice(), &[1.0, FRAC_PI_4, 1.0, FRAC_PI_4]);
        let s = make_example1();
        assert_eq!(s.regressor(&DVector::zeros(4)), DMatrix::zeros(4, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = DVector::from_fn(4, |_, _| rng.gen_range(-5.0..5.0));
            let th = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
            assert!(is_matched_at(&s, &x, &th, 1e-12));
        }
    }

    #[test]
    fn example2_structure() {
        let s = make_example2();
        assert_eq!(s.regressor(&DVector::zeros(2)), DMatrix::zeros(4, 2));
        assert!(!is_matched_at(&s, &v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0, 0.0]), 1e-12));
        let th = v(&[1.0, 1.0, 0.0, 0.0]);
        let x1 = std::f64::consts::FRAC_PI_2;
        let w = s.regressor(&v(&[x1, 0.0])).transpose() * &th;
        assert!((w[0] - (1.0 + x1.atan())).abs() < 1e-15);
    }

    #[test]
    fn example3_values() {
        let s = make_example3();
        assert_eq!(s.regressor(&DVector::zeros(4)), DMatrix::zeros(4, 4));
        let th = v(&[1.0, 2.0, 3.0, 0.5]);
        assert_eq!(eval_plant(&s, &DVector::zeros(4), &th, &v(&[0.0])).unwrap(), DVector::zeros(4));
        let h = std::f64::consts::FRAC_PI_2;
        let xd = eval_plant(&s, &v(&[h, 0.0, 1.0, 0.0]), &th, &v(&[0.0])).unwrap();
        assert!((xd[1] - (1.0 + 2.0 * (1.0 - h))).abs() < 1e-15);
        assert!((xd[3] - 3.0 * (h - 1.0)).abs() < 1e-15);
        assert_eq!(xd[0], 0.0);
        assert_eq!(xd[2], 0.0);
    }

    #[test]
    fn non_finite_and_box() {
        let s = make_scalar_example();
        let err = eval_plant(&s, &v(&[f64::NAN]), &v(&[1.0]), &v(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::NonFiniteDynamics { .. }));
        let err = eval_plant(&s, &v(&[2e3]), &v(&[1.0]), &v(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::NonFiniteDynamics { .. }));
        let err = eval_plant(&s, &v(&[1.0, 2.0]), &v(&[1.0]), &v(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn true_parameters_box() {
        let b = ParamBox::new(vec![0.0], vec![1.0]);
        assert!(TrueParameters::new(v(&[0.5]), Some(b.clone())).is_ok());
        assert!(TrueParameters::new(v(&[1.5]), Some(b.clone())).is_err());
        let inf = b.inflated(0.5);
        assert_eq!(inf.lo, vec![-0.25]);
        assert_eq!(inf.hi, vec![1.25]);
    }
}
