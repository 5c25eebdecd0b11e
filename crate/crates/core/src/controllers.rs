//! Certainty-equivalence controllers enforcing
//! `dV/dx (f + Delta^T theta_hat + B u) <= -lambda V`.

use std::fmt;

use nalgebra::DVector;

use crate::clf::Clf;
use crate::dynamics::UncertainSystem;
use crate::error::{check_dim, Error, Result};

/// Threshold separating an active decrease constraint from rounding noise.
pub const ACTIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub u: DVector<f64>,
    /// `a = dV/dx (f + Delta^T theta_hat)`
    pub drift_rate: f64,
    /// `b = B^T (dV/dx)^T`
    pub input_gain: DVector<f64>,
    /// `-lambda V - dV/dx (f + Delta^T theta_hat + B u)`
    pub constraint_slack: f64,
}

impl ControlDecision {
    /// Scores an arbitrary input against the decrease constraint.
    pub fn evaluate(
        sys: &dyn UncertainSystem,
        clf: &Clf,
        x: &DVector<f64>,
        theta_hat: &DVector<f64>,
        u: DVector<f64>,
    ) -> Result<Self> {
        let (a, b, v) = lie_terms(sys, clf, x, theta_hat)?;
        check_dim("input", sys.input_dim(), u.len())?;
        let slack = -clf.lambda * v - a - b.dot(&u);
        Ok(ControlDecision {
            u,
            drift_rate: a,
            input_gain: b,
            constraint_slack: slack,
        })
    }
}

/// `(a, b, V)` at `(x, theta_hat)`.
pub fn lie_terms(
    sys: &dyn UncertainSystem,
    clf: &Clf,
    x: &DVector<f64>,
    theta_hat: &DVector<f64>,
) -> Result<(f64, DVector<f64>, f64)> {
    check_dim("state", sys.state_dim(), x.len())?;
    check_dim("theta_hat", sys.param_dim(), theta_hat.len())?;
    clf.check_params(theta_hat)?;
    let grad = clf.grad_x(x, theta_hat);
    let nominal = sys.drift(x) + sys.regressor(x).transpose() * theta_hat;
    let a = grad.dot(&nominal);
    let b = sys.input_map(x).transpose() * &grad;
    Ok((a, b, clf.value(x, theta_hat)))
}

/// Any feedback law meeting the decrease constraint can drive a simulation.
pub trait Controller: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn decide(
        &self,
        sys: &dyn UncertainSystem,
        clf: &Clf,
        x: &DVector<f64>,
        theta_hat: &DVector<f64>,
    ) -> Result<ControlDecision>;
}

/// Pointwise min-norm controller.
#[derive(Debug, Clone, Copy, Default)]
pub struct MinNorm;

impl Controller for MinNorm {
    fn name(&self) -> &str {
        "min_norm"
    }
    fn decide(
        &self,
        sys: &dyn UncertainSystem,
        clf: &Clf,
        x: &DVector<f64>,
        theta_hat: &DVector<f64>,
    ) -> Result<ControlDecision> {
        min_norm_control(sys, clf, x, theta_hat)
    }
}

/// Closed-form least-norm input for the single affine constraint
/// `a + b^T u <= -lambda V`.
pub fn min_norm_control(
    sys: &dyn UncertainSystem,
    clf: &Clf,
    x: &DVector<f64>,
    theta_hat: &DVector<f64>,
) -> Result<ControlDecision> {
    let m = sys.input_dim();
    if x.iter().all(|&v| v == 0.0) {
        return ControlDecision::evaluate(sys, clf, x, theta_hat, DVector::zeros(m));
    }
    let (a, b, v) = lie_terms(sys, clf, x, theta_hat)?;
    let excess = a + clf.lambda * v;
    let u = if excess <= 0.0 {
        DVector::zeros(m)
    } else {
        let bb = b.norm_squared();
        if excess > ACTIVE_TOL && b.norm() <= ACTIVE_TOL {
            return Err(Error::ClfViolation {
                x: x.as_slice().to_vec(),
                theta_hat: theta_hat.as_slice().to_vec(),
            });
        }
        if bb == 0.0 {
            DVector::zeros(m)
        } else {
            &b * (-excess / bb)
        }
    };
    let slack = -clf.lambda * v - a - b.dot(&u);
    Ok(ControlDecision {
        u,
        drift_rate: a,
        input_gain: b,
        constraint_slack: slack,
    })
}

/// `u = -theta_hat |x| - x / 2` for `x' = theta |x| + u`.
pub fn scalar_example_control(x: f64, theta_hat: f64) -> f64 {
    -theta_hat * x.abs() - 0.5 * x
}

/// Explicit scalar law `u = (-f(x) - Delta(x)^T theta_hat - x / 2) / B(x)`,
/// which reduces to [`scalar_example_control`] on the motivating plant.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarExplicit;

impl Controller for ScalarExplicit {
    fn name(&self) -> &str {
        "scalar_explicit"
    }
    fn decide(
        &self,
        sys: &dyn UncertainSystem,
        clf: &Clf,
        x: &DVector<f64>,
        theta_hat: &DVector<f64>,
    ) -> Result<ControlDecision> {
        if sys.state_dim() != 1 || sys.input_dim() != 1 {
            return Err(Error::validation("controller", "scalar_explicit needs n = m = 1"));
        }
        let w = sys.drift(x) + sys.regressor(x).transpose() * theta_hat;
        let g = sys.input_map(x)[(0, 0)];
        let u = (-w[0] - 0.5 * x[0]) / g;
        ControlDecision::evaluate(sys, clf, x, theta_hat, DVector::from_element(1, u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clf::{make_quadratic_clf, make_scaled_quadratic_clf};
    use crate::dynamics::{make_scalar_example, ScalarBasis, ScalarCustom};
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn half_square() -> Clf {
        make_scaled_quadratic_clf(DMatrix::identity(1, 1), 1.0, 0.5).unwrap()
    }

    #[test]
    fn scalar_min_norm_value() {
        let d = min_norm_control(&make_scalar_example(), &half_square(), &v(&[1.0]), &v(&[0.0])).unwrap();
        assert!((d.u[0] + 0.5).abs() < 1e-15);
        assert_eq!(d.drift_rate, 0.0);
        assert!(d.constraint_slack.abs() < 1e-15);
    }

    #[test]
    fn origin_gives_zero() {
        let d = min_norm_control(&make_scalar_example(), &half_square(), &v(&[0.0]), &v(&[3.0])).unwrap();
        assert_eq!(d.u[0], 0.0);
        assert_eq!(scalar_example_control(0.0, 5.0), 0.0);
    }

    #[test]
    fn stable_drift_needs_no_input() {
        #[derive(Debug)]
        struct Contracting;
        impl UncertainSystem for Contracting {
            fn name(&self) -> &str {
                "contracting"
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
            fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
                x * -2.0
            }
            fn regressor(&self, _x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(1, 1)
            }
            fn input_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::identity(1, 1)
            }
        }
        let d = min_norm_control(&Contracting, &half_square(), &v(&[1.0]), &v(&[0.0])).unwrap();
        assert_eq!(d.drift_rate, -2.0);
        assert_eq!(d.u[0], 0.0);
        assert!((d.constraint_slack - 1.5).abs() < 1e-15);
    }

    #[test]
    fn violation_when_unactuated() {
        // Constant regressor with a V whose gradient is orthogonal to B can't happen
        // in 1D, so zero out B instead.
        #[derive(Debug)]
        struct Unactuated;
        impl UncertainSystem for Unactuated {
            fn name(&self) -> &str {
                "unactuated"
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
            fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
                x.clone()
            }
            fn regressor(&self, _x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(1, 1)
            }
            fn input_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(1, 1)
            }
        }
        let clf = make_quadratic_clf(DMatrix::identity(1, 1), 1.0).unwrap();
        let err = min_norm_control(&Unactuated, &clf, &v(&[1.0]), &v(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::ClfViolation { .. }));
    }

    #[test]
    fn explicit_law_matches_formula() {
        assert_eq!(scalar_example_control(2.0, 1.0), -3.0);
        let sys = make_scalar_example();
        let d = ScalarExplicit.decide(&sys, &half_square(), &v(&[2.0]), &v(&[1.0])).unwrap();
        assert_eq!(d.u[0], -3.0);
        // V' = -x^2 / 2 = -V: the constraint is met with equality.
        assert!(d.constraint_slack.abs() < 1e-15);
    }

    #[test]
    fn explicit_law_on_smooth_cubic_plant() {
        let sys = ScalarCustom::new(vec![ScalarBasis::X2]).unwrap();
        let d = ScalarExplicit.decide(&sys, &half_square(), &v(&[2.0]), &v(&[0.5])).unwrap();
        assert_eq!(d.u[0], -0.5 * 4.0 - 1.0);
    }
}
