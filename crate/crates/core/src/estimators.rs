//! Parameter estimation laws: the classical gradient law, the scalar and
//! general normalized laws, the momentum law and the `r -> inf` limits.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clf::Clf;
use crate::dynamics::UncertainSystem;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{is_symmetric, jacobi_eigen, JACOBI_TOL};

pub const DEFAULT_V_FLOOR: f64 = 1e-12;
pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_OMEGA_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub theta_hat: DVector<f64>,
    pub rho: f64,
    /// Momentum auxiliary; present only for [`EstimatorLaw::Momentum`].
    pub a_hat: Option<DVector<f64>>,
}

impl EstimatorState {
    pub fn new(theta_hat: DVector<f64>, rho: f64, a_hat: Option<DVector<f64>>) -> Self {
        EstimatorState { theta_hat, rho, a_hat }
    }

    pub fn is_finite(&self) -> bool {
        self.theta_hat.iter().all(|v| v.is_finite())
            && self.rho.is_finite()
            && self.a_hat.as_ref().is_none_or(|a| a.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaKind {
    /// `pi/2 + atan(scale * rho)`
    Arctan,
    /// `offset + exp(scale * rho)`
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainConfig {
    pub gamma: DMatrix<f64>,
    pub r: f64,
    pub epsilon: f64,
    pub omega_kind: OmegaKind,
    pub omega_scale: f64,
    pub omega_offset: f64,
    pub v_floor: f64,
}

impl GainConfig {
    /// Defaults with `Gamma = I_p`.
    pub fn identity(p: usize, r: f64) -> Self {
        GainConfig {
            gamma: DMatrix::identity(p, p),
            r,
            epsilon: DEFAULT_EPSILON,
            omega_kind: OmegaKind::Arctan,
            omega_scale: DEFAULT_OMEGA_SCALE,
            omega_offset: 0.0,
            v_floor: DEFAULT_V_FLOOR,
        }
    }

    pub fn with_gamma(mut self, gamma: DMatrix<f64>) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn omega(&self, rho: f64) -> f64 {
        match self.omega_kind {
            OmegaKind::Arctan => FRAC_PI_2 + (self.omega_scale * rho).atan(),
            OmegaKind::Exp => self.omega_offset + (self.omega_scale * rho).exp(),
        }
    }

    /// `d omega / d rho`
    pub fn omega_rho(&self, rho: f64) -> f64 {
        match self.omega_kind {
            OmegaKind::Arctan => {
                let s = self.omega_scale * rho;
                self.omega_scale / (1.0 + s * s)
            }
            OmegaKind::Exp => self.omega_scale * (self.omega_scale * rho).exp(),
        }
    }

    pub fn param_dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.gamma;
        if g.nrows() == 0 || g.nrows() != g.ncols() {
            return Err(Error::validation("gamma", "must be a non-empty square matrix"));
        }
        if g.iter().any(|v| !v.is_finite()) || !is_symmetric(g, 1e-12) {
            return Err(Error::validation("gamma", "must be finite and symmetric"));
        }
        let min_eig = jacobi_eigen(g, JACOBI_TOL).min();
        if min_eig <= 0.0 {
            return Err(Error::validation(
                "gamma",
                format!("must be positive definite (min eigenvalue {min_eig:e})"),
            ));
        }
        if !(self.r >= 1.0) || !self.r.is_finite() {
            return Err(Error::validation("r", "must be finite and >= 1"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::validation("epsilon", "must be finite and > 0"));
        }
        if !(self.omega_scale > 0.0) || !self.omega_scale.is_finite() {
            return Err(Error::validation("omega_scale", "must be finite and > 0"));
        }
        if self.omega_kind == OmegaKind::Exp && !(self.omega_offset >= 0.0) {
            return Err(Error::validation("omega_offset", "must be >= 0"));
        }
        if !(self.v_floor > 0.0) || !self.v_floor.is_finite() {
            return Err(Error::validation("v_floor", "must be finite and > 0"));
        }
        Ok(())
    }

    /// `omega(rho) * max(V, v_floor)^(1/r - 1)` and the floored `V`.
    fn normalization(&self, v: f64, rho: f64) -> (f64, f64) {
        let vt = v.max(self.v_floor);
        (self.omega(rho) * vt.powf(1.0 / self.r - 1.0), vt)
    }

    fn rho_rate(&self, rho: f64, vt: f64, weight: f64, grad_theta_dot: f64) -> f64 {
        let denom = self.omega_rho(rho) * (self.r * vt.powf(1.0 / self.r) + self.epsilon);
        -weight / denom * grad_theta_dot
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitingStyle {
    /// `gamma sign(x) (x^2 + 1_{x != 0})`, the limit for `x' = theta |x| + u`.
    Nonsmooth,
    /// `gamma (x^3 + x)`, the limit for `x' = theta x^2 + u`.
    SmoothCubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum EstimatorLaw {
    Standard,
    ScalarNormalized,
    Normalized,
    Momentum,
    Limiting { style: LimitingStyle },
}

impl EstimatorLaw {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorLaw::Standard => "standard",
            EstimatorLaw::ScalarNormalized => "scalar_normalized",
            EstimatorLaw::Normalized => "normalized",
            EstimatorLaw::Momentum => "momentum",
            EstimatorLaw::Limiting { .. } => "limiting",
        }
    }

    pub fn uses_momentum(&self) -> bool {
        matches!(self, EstimatorLaw::Momentum)
    }

    pub fn is_scalar_only(&self) -> bool {
        matches!(self, EstimatorLaw::ScalarNormalized | EstimatorLaw::Limiting { .. })
    }

    /// Whether the law carries the root index `r`.
    pub fn uses_r(&self) -> bool {
        matches!(
            self,
            EstimatorLaw::ScalarNormalized | EstimatorLaw::Normalized | EstimatorLaw::Momentum
        )
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `Gamma Delta(x) (dV/dx)^T`
pub fn standard_update(grad_x: &DVector<f64>, regressor: &DMatrix<f64>, gamma: &DMatrix<f64>) -> DVector<f64> {
    gamma * (regressor * grad_x)
}

/// `gamma sign(x) (x^2 + |x|^(2/r))`
pub fn scalar_normalized_update(x: f64, gamma: f64, r: f64) -> f64 {
    gamma * sign(x) * (x * x + x.abs().powf(2.0 / r))
}

pub fn limiting_form_update(x: f64, gamma: f64, style: LimitingStyle) -> f64 {
    match style {
        LimitingStyle::Nonsmooth => {
            let indicator = if x != 0.0 { 1.0 } else { 0.0 };
            gamma * sign(x) * (x * x + indicator)
        }
        LimitingStyle::SmoothCubic => gamma * (x * x * x + x),
    }
}

fn check_finite(x: &DVector<f64>, theta_hat: &DVector<f64>, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteUpdate {
            x: x.as_slice().to_vec(),
            theta_hat: theta_hat.as_slice().to_vec(),
        })
    }
}

fn check_inputs(sys: &dyn UncertainSystem, cfg: &GainConfig, state: &EstimatorState, x: &DVector<f64>) -> Result<()> {
    check_dim("state", sys.state_dim(), x.len())?;
    check_dim("theta_hat", sys.param_dim(), state.theta_hat.len())?;
    check_dim("gamma", sys.param_dim(), cfg.param_dim())
}

/// Normalized law with `rho` modulation. Returns `(theta_hat', rho')`.
pub fn normalized_update(
    sys: &dyn UncertainSystem,
    clf: &Clf,
    state: &EstimatorState,
    x: &DVector<f64>,
    cfg: &GainConfig,
) -> Result<(DVector<f64>, f64)> {
    check_inputs(sys, cfg, state, x)?;
    let th = &state.theta_hat;
    clf.check_params(th)?;
    let (weight, vt) = cfg.normalization(clf.value(x, th), state.rho);
    let theta_dot = standard_update(&clf.grad_x(x, th), &sys.regressor(x), &cfg.gamma) * weight;
    let rho_dot = if clf.param_dependent() {
        cfg.rho_rate(state.rho, vt, weight, clf.grad_theta(x, th).dot(&theta_dot))
    } else {
        0.0
    };
    check_finite(x, th, theta_dot.as_slice())?;
    check_finite(x, th, &[rho_dot])?;
    Ok((theta_dot, rho_dot))
}

/// Momentum law. Returns `(a_hat', theta_hat', rho')`.
///
/// Needs a CLF exposing its Hessian `P(theta_hat)` with `V = x^T P x / 2`.
pub fn momentum_update(
    sys: &dyn UncertainSystem,
    clf: &Clf,
    state: &EstimatorState,
    x: &DVector<f64>,
    cfg: &GainConfig,
    lambda: f64,
) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    check_inputs(sys, cfg, state, x)?;
    let a_hat = state.a_hat.as_ref().ok_or(Error::MissingAuxState)?;
    check_dim("a_hat", sys.param_dim(), a_hat.len())?;
    let th = &state.theta_hat;
    clf.check_params(th)?;
    let p = clf
        .quadratic_form(th)
        .ok_or_else(|| Error::validation("clf", "momentum law needs a quadratic-form CLF"))?;
    let delta = sys.regressor(x);
    let (weight, vt) = cfg.normalization(clf.value(x, th), state.rho);

    let a_dot = standard_update(&clf.grad_x(x, th), &delta, &cfg.gamma) * weight;
    let coupling = &delta * p * delta.transpose();
    let theta_dot = &cfg.gamma * (coupling * (a_hat - th)) * (weight / lambda);
    let rho_dot = if clf.param_dependent() {
        cfg.rho_rate(state.rho, vt, weight, clf.grad_theta(x, th).dot(&theta_dot))
    } else {
        0.0
    };
    check_finite(x, th, a_dot.as_slice())?;
    check_finite(x, th, theta_dot.as_slice())?;
    check_finite(x, th, &[rho_dot])?;
    Ok((a_dot, theta_dot, rho_dot))
}

/// Time derivative of the estimator state under `law`.
pub fn estimator_rhs(
    law: EstimatorLaw,
    sys: &dyn UncertainSystem,
    clf: &Clf,
    state: &EstimatorState,
    x: &DVector<f64>,
    cfg: &GainConfig,
) -> Result<EstimatorState> {
    match law {
        EstimatorLaw::Standard => {
            check_inputs(sys, cfg, state, x)?;
            clf.check_params(&state.theta_hat)?;
            let d = standard_update(&clf.grad_x(x, &state.theta_hat), &sys.regressor(x), &cfg.gamma);
            check_finite(x, &state.theta_hat, d.as_slice())?;
            Ok(EstimatorState::new(d, 0.0, None))
        }
        EstimatorLaw::ScalarNormalized | EstimatorLaw::Limiting { .. } => {
            check_inputs(sys, cfg, state, x)?;
            if x.len() != 1 || state.theta_hat.len() != 1 {
                return Err(Error::validation("estimator", "scalar laws need n = p = 1"));
            }
            let gamma = cfg.gamma[(0, 0)];
            let d = match law {
                EstimatorLaw::Limiting { style } => limiting_form_update(x[0], gamma, style),
                _ => scalar_normalized_update(x[0], gamma, cfg.r),
            };
            check_finite(x, &state.theta_hat, &[d])?;
            Ok(EstimatorState::new(DVector::from_element(1, d), 0.0, None))
        }
        EstimatorLaw::Normalized => {
            let (d, rho) = normalized_update(sys, clf, state, x, cfg)?;
            Ok(EstimatorState::new(d, rho, None))
        }
        EstimatorLaw::Momentum => {
            let (a, d, rho) = momentum_update(sys, clf, state, x, cfg, clf.lambda)?;
            Ok(EstimatorState::new(d, rho, Some(a)))
        }
    }
}
