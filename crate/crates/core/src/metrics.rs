//! Lyapunov monitors, r-th-root integrability functionals and convergence
//! statistics computed from trajectories.
//!
//! All Q monitors use the true parameter and are diagnostics only.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clf::Clf;
use crate::estimators::{EstimatorLaw, GainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QKind {
    /// `V + theta_tilde^T Gamma^-1 theta_tilde / 2`, the classical gradient-law certificate.
    Standard,
    Prop1,
    Thm1,
    Thm3,
}

impl QKind {
    /// Monitor whose non-increase is claimed for `law`.
    pub fn for_law(law: EstimatorLaw) -> QKind {
        match law {
            EstimatorLaw::Standard | EstimatorLaw::Limiting { .. } => QKind::Standard,
            EstimatorLaw::ScalarNormalized => QKind::Prop1,
            EstimatorLaw::Normalized => QKind::Thm1,
            EstimatorLaw::Momentum => QKind::Thm3,
        }
    }
}

/// `e^T Gamma^-1 e`
pub fn gamma_inverse_norm(gamma: &DMatrix<f64>, e: &DVector<f64>) -> f64 {
    match gamma.clone().cholesky() {
        Some(ch) => e.dot(&ch.solve(e)),
        None => f64::NAN,
    }
}

/// `x^2 + r |x|^(2/r) + theta_tilde^2 / gamma`
pub fn q_prop1(x: f64, theta_hat: f64, theta: f64, gamma: f64, r: f64) -> f64 {
    let e = theta_hat - theta;
    x * x + r * x.abs().powf(2.0 / r) + e * e / gamma
}

/// `omega(rho) (r V^(1/r) + eps) + theta_tilde^T Gamma^-1 theta_tilde / 2`
pub fn q_thm1(
    clf: &Clf,
    x: &DVector<f64>,
    theta_hat: &DVector<f64>,
    rho: f64,
    theta: &DVector<f64>,
    cfg: &GainConfig,
) -> f64 {
    let v = clf.value(x, theta_hat);
    cfg.omega(rho) * (cfg.r * v.powf(1.0 / cfg.r) + cfg.epsilon)
        + 0.5 * gamma_inverse_norm(&cfg.gamma, &(theta_hat - theta))
}

/// Momentum-law monitor with the `(a_hat - theta)` and `(theta_hat - a_hat)` terms.
#[allow(clippy::too_many_arguments)]
pub fn q_thm3(
    clf: &Clf,
    x: &DVector<f64>,
    a_hat: &DVector<f64>,
    theta_hat: &DVector<f64>,
    rho: f64,
    theta: &DVector<f64>,
    cfg: &GainConfig,
) -> f64 {
    let v = clf.value(x, theta_hat);
    cfg.omega(rho) * (cfg.r * v.powf(1.0 / cfg.r) + cfg.epsilon)
        + 0.5 * gamma_inverse_norm(&cfg.gamma, &(a_hat - theta))
        + 0.5 * gamma_inverse_norm(&cfg.gamma, &(theta_hat - a_hat))
}

pub fn q_standard(
    clf: &Clf,
    x: &DVector<f64>,
    theta_hat: &DVector<f64>,
    theta: &DVector<f64>,
    gamma: &DMatrix<f64>,
) -> f64 {
    clf.value(x, theta_hat) + 0.5 * gamma_inverse_norm(gamma, &(theta_hat - theta))
}

/// Per-step tolerance `max(1e-8, 10 dt^2 Q(0))` for monotonicity checks.
pub fn q_tolerance(dt: f64, q0: f64) -> f64 {
    (10.0 * dt * dt * q0.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub max_violation: f64,
    /// `k` such that `values[k+1] - values[k] > tol`.
    pub violating_indices: Vec<usize>,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        self.max_violation == 0.0
    }
}

pub fn monotonicity_report(values: &[f64], tol_per_step: f64) -> MonotonicityReport {
    let mut max_violation = 0.0_f64;
    let mut violating_indices = Vec::new();
    for (k, w) in values.windows(2).enumerate() {
        let excess = w[1] - w[0] - tol_per_step;
        if excess > 0.0 || excess.is_nan() {
            violating_indices.push(k);
            max_violation = if excess.is_nan() { f64::INFINITY } else { max_violation.max(excess) };
        }
    }
    MonotonicityReport {
        max_violation,
        violating_indices,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootIntegral {
    pub integral: f64,
    /// Integral over `[T/2, T]` divided by the total; 0 when the total is 0.
    pub tail_fraction: f64,
    /// Cumulative trapezoidal integral at every sample time.
    pub partials: Vec<f64>,
}

fn trapezoid_partials(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut partials = Vec::with_capacity(times.len());
    if !times.is_empty() {
        partials.push(0.0);
    }
    for k in 1..times.len() {
        acc += 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
        partials.push(acc);
    }
    partials
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.iter().position(|&s| s >= t) {
        None => *values.last().unwrap_or(&0.0),
        Some(0) => values[0],
        Some(k) => {
            let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
            values[k - 1] + w * (values[k] - values[k - 1])
        }
    }
}

/// Trapezoidal `int ||x||^(2/r) dt` from sampled state norms.
pub fn r_root_integral(times: &[f64], state_norms: &[f64], r: f64) -> RootIntegral {
    assert_eq!(times.len(), state_norms.len());
    let integrand: Vec<f64> = state_norms.iter().map(|n| n.powf(2.0 / r)).collect();
    let partials = trapezoid_partials(times, &integrand);
    let integral = *partials.last().unwrap_or(&0.0);
    let tail_fraction = if integral > 0.0 {
        let t0 = times[0];
        let t_end = *times.last().unwrap();
        let half = interpolate(times, &partials, t0 + 0.5 * (t_end - t0));
        (integral - half) / integral
    } else {
        0.0
    };
    RootIntegral {
        integral,
        tail_fraction,
        partials,
    }
}

/// `c1^(-1/r) int V^(1/r) dt`, an upper bound on `int ||x||^(2/r) dt`.
pub fn v_root_bound(times: &[f64], values: &[f64], r: f64, c1: f64) -> f64 {
    let integrand: Vec<f64> = values.iter().map(|v| v.max(0.0).powf(1.0 / r)).collect();
    let partials = trapezoid_partials(times, &integrand);
    partials.last().copied().unwrap_or(0.0) * c1.powf(-1.0 / r)
}

/// First time after which `norms` stays strictly below `level`.
pub fn convergence_time(times: &[f64], norms: &[f64], level: f64) -> Option<f64> {
    assert_eq!(times.len(), norms.len());
    match norms.iter().rposition(|&n| !(n < level)) {
        None => times.first().copied(),
        Some(k) if k + 1 == norms.len() => None,
        Some(k) => Some(times[k + 1]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clf::make_quadratic_clf;

    fn grid(t_end: f64, dt: f64) -> Vec<f64> {
        let n = (t_end / dt).round() as usize;
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn prop1_values() {
        assert_eq!(q_prop1(0.0, 0.7, 0.7, 1.0, 4.0), 0.0);
        assert_eq!(q_prop1(1.0, 2.0, 1.0, 1.0, 1.0), 3.0);
    }

    #[test]
    fn thm1_floor_and_gamma_scaling() {
        let clf = make_quadratic_clf(DMatrix::identity(2, 2), 1.0).unwrap();
        let cfg = GainConfig::identity(2, 2.0);
        let th = DVector::from_vec(vec![0.3, -0.2]);
        let q = q_thm1(&clf, &DVector::zeros(2), &th, 0.4, &th, &cfg);
        assert!((q - cfg.omega(0.4) * cfg.epsilon).abs() < 1e-15);

        let theta = DVector::zeros(2);
        let base = q_thm1(&clf, &DVector::zeros(2), &th, 0.0, &theta, &cfg) - cfg.omega(0.0) * cfg.epsilon;
        let doubled = cfg.clone().with_gamma(DMatrix::identity(2, 2) * 2.0);
        let halved = q_thm1(&clf, &DVector::zeros(2), &th, 0.0, &theta, &doubled) - cfg.omega(0.0) * cfg.epsilon;
        assert!((halved - 0.5 * base).abs() < 1e-15);
    }

    #[test]
    fn thm3_floor_and_symmetry() {
        let clf = make_quadratic_clf(DMatrix::identity(2, 2), 1.0).unwrap();
        let cfg = GainConfig::identity(2, 2.0);
        let th = DVector::from_vec(vec![1.0, 2.0]);
        let q = q_thm3(&clf, &DVector::zeros(2), &th, &th, 0.0, &th, &cfg);
        assert!((q - cfg.omega(0.0) * cfg.epsilon).abs() < 1e-15);

        // theta = 0, a_hat = d1, theta_hat = d1 + d2 swaps to a_hat = d2, theta_hat = d2 + d1.
        let theta = DVector::zeros(2);
        let d1 = DVector::from_vec(vec![0.5, -1.0]);
        let d2 = DVector::from_vec(vec![2.0, 0.25]);
        let x = DVector::zeros(2);
        let q1 = q_thm3(&clf, &x, &d1, &(&d1 + &d2), 0.0, &theta, &cfg);
        let q2 = q_thm3(&clf, &x, &d2, &(&d2 + &d1), 0.0, &theta, &cfg);
        assert!((q1 - q2).abs() < 1e-15);
    }

    #[test]
    fn monotonicity_cases() {
        let dec = [5.0, 4.0, 3.5, 1.0];
        assert_eq!(monotonicity_report(&dec, 0.0).max_violation, 0.0);
        let flat = [2.0; 5];
        let rep = monotonicity_report(&flat, 0.0);
        assert!(rep.holds() && rep.violating_indices.is_empty());
        let jump = [1.0, 0.9, 1.0, 0.8];
        let rep = monotonicity_report(&jump, 1e-6);
        assert!((rep.max_violation - 0.1).abs() < 1e-5);
        assert_eq!(rep.violating_indices, vec![1]);
    }

    #[test]
    fn root_integral_exponential() {
        let t = grid(20.0, 1e-3);
        let norms: Vec<f64> = t.iter().map(|s| (-s).exp()).collect();
        let ri = r_root_integral(&t, &norms, 1.0);
        assert!((ri.integral - 0.5 * (1.0 - (-40.0f64).exp())).abs() < 1e-6);
        assert!(ri.partials.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn root_integral_zero_signal() {
        let t = grid(1.0, 0.1);
        let ri = r_root_integral(&t, &vec![0.0; t.len()], 2.0);
        assert_eq!((ri.integral, ri.tail_fraction), (0.0, 0.0));
    }

    #[test]
    fn harmonic_tail_matches_logarithm() {
        let t = grid(20.0, 1e-3);
        let norms: Vec<f64> = t.iter().map(|s| 1.0 / (s + 1.0)).collect();
        let ri = r_root_integral(&t, &norms, 2.0);
        let exact = (21f64.ln() - 11f64.ln()) / 21f64.ln();
        assert!((ri.tail_fraction - exact).abs() < 1e-6);
    }

    #[test]
    fn convergence_cases() {
        let dt = 1e-3;
        let t = grid(10.0, dt);
        let norms: Vec<f64> = t.iter().map(|s| (-s).exp()).collect();
        let ct = convergence_time(&t, &norms, (-3.0f64).exp()).unwrap();
        assert!((ct - 3.0).abs() <= dt);
        assert_eq!(convergence_time(&t, &vec![1.0; t.len()], 0.5), None);
        assert_eq!(convergence_time(&t, &vec![0.0; t.len()], 0.5), Some(0.0));
    }

    #[test]
    fn tolerance_floor() {
        assert_eq!(q_tolerance(1e-5, 1.0), 1e-8);
        assert!((q_tolerance(1e-3, 1.0) - 1e-5).abs() < 1e-20);
        assert!((q_tolerance(1e-2, 10.0) - 1e-2).abs() < 1e-17);
    }
}
