//! Closed-loop assembly and fixed-step RK4 integration.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::clf::Clf;
use crate::controllers::Controller;
use crate::dynamics::{eval_plant, SharedSystem};
use crate::error::{check_dim, Error, Result};
use crate::estimators::{estimator_rhs, EstimatorLaw, EstimatorState, GainConfig};
use crate::metrics::{q_prop1, q_standard, q_thm1, q_thm3, QKind};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_CONV_TOL: f64 = 1e-12;
pub const DEFAULT_CONV_WINDOW: usize = 100;

/// `[x, theta_hat, rho, a_hat?]` as one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: DVector<f64>,
    pub est: EstimatorState,
}

impl AugmentedState {
    pub fn dim(&self) -> usize {
        self.x.len() + self.est.theta_hat.len() + 1 + self.est.a_hat.as_ref().map_or(0, |a| a.len())
    }

    pub fn pack(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(self.x.as_slice());
        out.extend_from_slice(self.est.theta_hat.as_slice());
        out.push(self.est.rho);
        if let Some(a) = &self.est.a_hat {
            out.extend_from_slice(a.as_slice());
        }
        DVector::from_vec(out)
    }

    pub fn unpack(v: &DVector<f64>, n: usize, p: usize, momentum: bool) -> Self {
        let s = v.as_slice();
        let x = DVector::from_column_slice(&s[..n]);
        let theta_hat = DVector::from_column_slice(&s[n..n + p]);
        let rho = s[n + p];
        let a_hat = momentum.then(|| DVector::from_column_slice(&s[n + p + 1..n + 2 * p + 1]));
        AugmentedState {
            x,
            est: EstimatorState::new(theta_hat, rho, a_hat),
        }
    }

    pub fn norm(&self) -> f64 {
        self.pack().norm()
    }
}

/// One classical Runge-Kutta step.
///
/// A failing or non-finite stage derivative yields `NonFiniteStage` with the
/// 1-based stage index.
pub fn rk4_step<F>(mut rhs: F, s: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut stage = |k: usize, t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        match rhs(t, y) {
            Ok(d) if d.iter().all(|v| v.is_finite()) => Ok(d),
            _ => Err(Error::NonFiniteStage { stage: k }),
        }
    };
    let h = 0.5 * dt;
    let k1 = stage(1, t, s)?;
    let k2 = stage(2, t + h, &(s + &k1 * h))?;
    let k3 = stage(3, t + h, &(s + &k2 * h))?;
    let k4 = stage(4, t + dt, &(s + &k3 * dt))?;
    Ok(s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub t_final: f64,
    pub dt: f64,
    pub conv_tol: f64,
    /// Consecutive samples below `conv_tol`; 0 disables the early stop.
    pub conv_window: usize,
}

impl Horizon {
    pub fn new(t_final: f64) -> Self {
        Horizon {
            t_final,
            dt: DEFAULT_DT,
            conv_tol: DEFAULT_CONV_TOL,
            conv_window: DEFAULT_CONV_WINDOW,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::validation("t_final", "must be finite and > 0"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() || self.dt > self.t_final {
            return Err(Error::validation("dt", "must be finite, > 0 and <= t_final"));
        }
        if !(self.conv_tol >= 0.0) {
            return Err(Error::validation("conv_tol", "must be >= 0"));
        }
        Ok(())
    }

    /// Number of integration steps; the last one may be shorter than `dt`.
    pub fn steps(&self) -> usize {
        let n = self.t_final / self.dt;
        let rounded = n.round();
        if (n - rounded).abs() <= 1e-9 * n.max(1.0) {
            rounded as usize
        } else {
            n.ceil() as usize
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps() {
            self.t_final
        } else {
            k as f64 * self.dt
        }
    }
}

/// Fully resolved closed loop, ready to integrate.
#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub system: SharedSystem,
    pub clf: Clf,
    pub controller: Arc<dyn Controller>,
    pub law: EstimatorLaw,
    pub gains: GainConfig,
    pub theta_true: DVector<f64>,
    pub x0: DVector<f64>,
    pub initial: EstimatorState,
    pub horizon: Horizon,
    pub monitor: QKind,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("system", &self.system.name())
            .field("clf", &self.clf.name())
            .field("controller", &self.controller.name())
            .field("law", &self.law)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.system.state_dim()
    }
    pub fn m(&self) -> usize {
        self.system.input_dim()
    }
    pub fn p(&self) -> usize {
        self.system.param_dim()
    }

    /// Dimension and compatibility checks shared by every entry point.
    pub fn validate(&self) -> Result<()> {
        let (n, p) = (self.n(), self.p());
        self.horizon.validate()?;
        self.gains.validate()?;
        check_dim("x0", n, self.x0.len())?;
        check_dim("theta_true", p, self.theta_true.len())?;
        check_dim("theta_hat0", p, self.initial.theta_hat.len())?;
        check_dim("gamma", p, self.gains.param_dim())?;
        check_dim("clf state", n, self.clf.state_dim())?;
        if !self.initial.is_finite() || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("initial", "initial state must be finite"));
        }
        match (&self.initial.a_hat, self.law.uses_momentum()) {
            (Some(a), true) => check_dim("a_hat0", p, a.len())?,
            (None, true) => return Err(Error::validation("a_hat", "momentum law needs an initial a_hat")),
            (Some(_), false) => return Err(Error::validation("a_hat", "only the momentum law carries a_hat")),
            (None, false) => {}
        }
        if self.law.uses_momentum() && self.clf.quadratic_form(&self.initial.theta_hat).is_none() {
            return Err(Error::validation("estimator", "momentum law needs a quadratic-form CLF"));
        }
        if self.law.is_scalar_only() && (n != 1 || p != 1) {
            return Err(Error::validation("estimator", format!("{} law needs n = p = 1", self.law.name())));
        }
        if self.monitor == QKind::Prop1 && (n != 1 || p != 1) {
            return Err(Error::validation("monitor", "prop1 monitor needs a scalar system"));
        }
        if self.monitor == QKind::Thm3 && self.initial.a_hat.is_none() {
            return Err(Error::validation("monitor", "thm3 monitor needs a_hat"));
        }
        self.clf.check_params(&self.initial.theta_hat)
    }

    pub fn initial_state(&self) -> AugmentedState {
        AugmentedState {
            x: self.x0.clone(),
            est: self.initial.clone(),
        }
    }

    /// Derivative of the augmented state and the input applied.
    pub fn closed_loop_rhs(&self, s: &AugmentedState) -> Result<(AugmentedState, DVector<f64>)> {
        let sys = self.system.as_ref();
        let decision = self.controller.decide(sys, &self.clf, &s.x, &s.est.theta_hat)?;
        let x_dot = eval_plant(sys, &s.x, &self.theta_true, &decision.u)?;
        let est_dot = estimator_rhs(self.law, sys, &self.clf, &s.est, &s.x, &self.gains)?;
        Ok((AugmentedState { x: x_dot, est: est_dot }, decision.u))
    }

    pub fn q_value(&self, s: &AugmentedState) -> f64 {
        let th = &s.est.theta_hat;
        match self.monitor {
            QKind::Standard => q_standard(&self.clf, &s.x, th, &self.theta_true, &self.gains.gamma),
            QKind::Prop1 => q_prop1(s.x[0], th[0], self.theta_true[0], self.gains.gamma[(0, 0)], self.gains.r),
            QKind::Thm1 => q_thm1(&self.clf, &s.x, th, s.est.rho, &self.theta_true, &self.gains),
            QKind::Thm3 => match &s.est.a_hat {
                Some(a) => q_thm3(&self.clf, &s.x, a, th, s.est.rho, &self.theta_true, &self.gains),
                None => f64::NAN,
            },
        }
    }

    fn sample(&self, s: AugmentedState) -> Result<Sample> {
        let decision = self.controller.decide(self.system.as_ref(), &self.clf, &s.x, &s.est.theta_hat)?;
        let v = self.clf.value(&s.x, &s.est.theta_hat);
        let q = self.q_value(&s);
        Ok(Sample {
            u: decision.u,
            v,
            q,
            slack: decision.constraint_slack,
            state: s,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    NonFinite,
    Converged,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Horizon => "horizon",
            Termination::NonFinite => "non_finite",
            Termination::Converged => "converged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: AugmentedState,
    pub u: DVector<f64>,
    pub v: f64,
    pub q: f64,
    /// Decrease-constraint slack of the controller at this sample.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub samples: Vec<Sample>,
    pub terminated: Termination,
    /// Cause of a `NonFinite` termination.
    pub failure: Option<String>,
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn state_norms(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.x.norm()).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.v).collect()
    }

    pub fn q_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.q).collect()
    }

    /// Sample at the grid time closest to `t`.
    pub fn at(&self, t: f64) -> Option<&Sample> {
        if self.times.is_empty() || t > self.final_time() + 0.5 * self.dt {
            return None;
        }
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)?;
        self.samples.get(k)
    }
}

/// Integrates `scenario` from 0 to `t_final`, re-evaluating the controller
/// at every RK4 stage.
pub fn simulate(scenario: &Scenario) -> Result<Trajectory> {
    scenario.validate()?;
    let (n, p) = (scenario.n(), scenario.p());
    let momentum = scenario.law.uses_momentum();
    let horizon = scenario.horizon;
    let steps = horizon.steps();

    let mut times = Vec::with_capacity(steps + 1);
    let mut samples = Vec::with_capacity(steps + 1);
    let mut below = 0usize;

    let first = scenario.sample(scenario.initial_state())?;
    let mut packed = first.state.pack();
    if first.v < horizon.conv_tol {
        below += 1;
    }
    times.push(0.0);
    samples.push(first);

    let last_error: RefCell<Option<Error>> = RefCell::new(None);
    let rhs = |_t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let s = AugmentedState::unpack(y, n, p, momentum);
        match scenario.closed_loop_rhs(&s) {
            Ok((d, _)) => Ok(d.pack()),
            Err(e) => {
                *last_error.borrow_mut() = Some(e.clone());
                Err(e)
            }
        }
    };

    let fail = |times: Vec<f64>, samples: Vec<Sample>, msg: String| Trajectory {
        times,
        samples,
        terminated: Termination::NonFinite,
        failure: Some(msg),
        dt: horizon.dt,
    };

    for k in 0..steps {
        let t = horizon.time(k);
        let t_next = horizon.time(k + 1);
        last_error.borrow_mut().take();
        let next = match rk4_step(&rhs, &packed, t, t_next - t) {
            Ok(next) if next.iter().all(|v| v.is_finite()) => next,
            Ok(_) => return Ok(fail(times, samples, format!("non-finite state after step at t = {t}"))),
            Err(e) => {
                let msg = match last_error.borrow_mut().take() {
                    Some(cause) if !cause.is_numeric_failure() => return Err(cause),
                    Some(cause) => format!("{e} at t = {t}: {cause}"),
                    None => format!("{e} at t = {t}"),
                };
                return Ok(fail(times, samples, msg));
            }
        };
        let sample = match scenario.sample(AugmentedState::unpack(&next, n, p, momentum)) {
            Ok(s) => s,
            Err(e) if e.is_numeric_failure() => {
                return Ok(fail(times, samples, format!("at t = {t_next}: {e}")));
            }
            Err(e) => return Err(e),
        };
        below = if sample.v < horizon.conv_tol { below + 1 } else { 0 };
        packed = next;
        times.push(t_next);
        samples.push(sample);
        if horizon.conv_window > 0 && below >= horizon.conv_window {
            return Ok(Trajectory {
                times,
                samples,
                terminated: Termination::Converged,
                failure: None,
                dt: horizon.dt,
            });
        }
    }

    Ok(Trajectory {
        times,
        samples,
        terminated: Termination::Horizon,
        failure: None,
        dt: horizon.dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_zero_and_constant() {
        let s = DVector::from_vec(vec![1.0, -2.0]);
        let same = rk4_step(|_, y| Ok(DVector::zeros(y.len())), &s, 0.0, 0.1).unwrap();
        assert_eq!(same, s);
        let c = DVector::from_vec(vec![3.0, 0.5]);
        let moved = rk4_step(|_, _| Ok(c.clone()), &s, 0.0, 0.25).unwrap();
        assert_eq!(moved, &s + &c * 0.25);
    }

    #[test]
    fn rk4_exponential() {
        let s = DVector::from_element(1, 1.0);
        let next = rk4_step(|_, y| Ok(-y), &s, 0.0, 0.1).unwrap();
        assert!((next[0] - (-0.1f64).exp()).abs() < 1e-7);
        assert!((next[0] - 0.9048375).abs() < 1e-7);
    }

    #[test]
    fn rk4_reports_stage() {
        let s = DVector::from_element(1, 1.0);
        let mut calls = 0;
        let err = rk4_step(
            |_, y| {
                calls += 1;
                if calls == 3 {
                    Ok(DVector::from_element(1, f64::NAN))
                } else {
                    Ok(y.clone())
                }
            },
            &s,
            0.0,
            0.1,
        )
        .unwrap_err();
        assert_eq!(err, Error::NonFiniteStage { stage: 3 });
    }

    #[test]
    fn pack_round_trip() {
        let s = AugmentedState {
            x: DVector::from_vec(vec![1.0, 2.0]),
            est: EstimatorState::new(DVector::from_vec(vec![3.0]), 4.0, Some(DVector::from_vec(vec![5.0]))),
        };
        let v = s.pack();
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(AugmentedState::unpack(&v, 2, 1, true), s);
        assert_eq!(s.dim(), 5);
    }

    #[test]
    fn horizon_grid() {
        let h = Horizon { dt: 0.3, ..Horizon::new(1.0) };
        assert_eq!(h.steps(), 4);
        assert!((h.time(3) - 0.9).abs() < 1e-15);
        assert_eq!(h.time(4), 1.0);
        let exact = Horizon { dt: 1e-3, ..Horizon::new(20.0) };
        assert_eq!(exact.steps(), 20_000);
        assert!(Horizon::new(-1.0).validate().is_err());
    }
}
