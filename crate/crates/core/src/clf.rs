//! Control Lyapunov functions and the numeric vanishing-degree probe.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{ParamBox, StrictFeedback, UncertainSystem};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{halton, is_symmetric, jacobi_eigen, JACOBI_TOL};

/// Positive-definiteness tolerance for CLF metrics.
pub const SPD_TOL: f64 = 1e-10;

/// Lower bound on `|theta_hat_2|` for the feedback-linearizing transform.
pub const THETA2_FLOOR: f64 = 0.1;

/// Number of low-discrepancy samples used to estimate `c1`, `c2`.
pub const BOUND_SAMPLES: u64 = 10_000;

/// The shape of a CLF: value and gradients as functions of `(x, theta_hat)`.
pub trait ClfForm: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>, theta_hat: &DVector<f64>) -> f64;
    /// `dV/dx` as a length-`n` vector.
    fn grad_x(&self, x: &DVector<f64>, theta_hat: &DVector<f64>) -> DVector<f64>;
    /// `dV/dtheta_hat` as a length-`p` vector.
    fn grad_theta(&self, x: &DVector<f64>, theta_hat: &DVector<f64>) -> DVector<f64>;
    fn param_dependent(&self) -> bool;

    /// `H(theta_hat)` such that `V = 1/2 x^T H x`, when `V` is a quadratic form in `x`.
    fn quadratic_form(&self, _theta_hat: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Rejects estimates for which the form is not a valid CLF.
    fn check_params(&self, _theta_hat: &DVector<f64>) -> Result<()> {
        Ok(())
    }
}

/// Region on which the quadratic-bound constants are estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct ClfDomain {
    pub state_half_width: f64,
    pub theta_box: Option<ParamBox>,
}

impl ClfDomain {
    pub fn new(state_half_width: f64, theta_box: Option<ParamBox>) -> Self {
        ClfDomain {
            state_half_width,
            theta_box,
        }
    }

    /// Draws `(x, theta_hat)` uniformly from the domain.
    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize, p: usize) -> (DVector<f64>, DVector<f64>) {
        let w = self.state_half_width;
        let x = DVector::from_fn(n, |_, _| rng.gen_range(-w..w));
        let th = match &self.theta_box {
            Some(b) => DVector::from_iterator(p, (0..p).map(|i| rng.gen_range(b.lo[i]..=b.hi[i]))),
            None => DVector::zeros(p),
        };
        (x, th)
    }
}

/// Default state region for sampled bounds.
pub const DEFAULT_STATE_HALF_WIDTH: f64 = 5.0;

#[derive(Clone)]
pub struct Clf {
    form: Arc<dyn ClfForm>,
    pub c1: f64,
    pub c2: f64,
    pub lambda: f64,
    pub domain: ClfDomain,
}

impl fmt::Debug for Clf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Clf")
            .field("form", &self.form.name())
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl Clf {
    /// Wraps a form with explicit bound constants.
    pub fn new(form: Arc<dyn ClfForm>, c1: f64, c2: f64, lambda: f64, domain: ClfDomain) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::validation("clf.lambda", "must be positive"));
        }
        if !(c1 > 0.0 && c2 >= c1) {
            return Err(Error::validation("clf", format!("invalid bounds c1 = {c1}, c2 = {c2}")));
        }
        Ok(Clf {
            form,
            c1,
            c2,
            lambda,
            domain,
        })
    }

    /// Wraps a form and estimates `c1`, `c2` by sampling `domain`.
    pub fn with_sampled_bounds(form: Arc<dyn ClfForm>, lambda: f64, domain: ClfDomain, p: usize) -> Result<Self> {
        let (c1, c2) = sampled_bounds(form.as_ref(), &domain, p, BOUND_SAMPLES);
        Clf::new(form, c1, c2, lambda, domain)
    }

    pub fn name(&self) -> &str {
        self.form.name()
    }
    pub fn state_dim(&self) -> usize {
        self.form.state_dim()
    }
    pub fn value(&self, x: &DVector<f64>, theta_hat: &DVector<f64>) -> f64 {
        self.form.value(x, theta_hat)
    }
    pub fn grad_x(&self, x: &DVector<f64>, theta_hat: &DVector<f64>) -> DVector<f64> {
        self.form.grad_x(x, theta_hat)
    }
    pub fn grad_theta(&self, x: &DVector<f64>, theta_hat: &DVector<f64>) -> DVector<f64> {
        self.form.grad_theta(x, theta_hat)
    }
    pub fn param_dependent(&self) -> bool {
        self.form.param_dependent()
    }
    pub fn quadratic_form(&self, theta_hat: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.form.quadratic_form(theta_hat)
    }
    pub fn check_params(&self, theta_hat: &DVector<f64>) -> Result<()> {
        self.form.check_params(theta_hat)
    }
}

/// min / max of `V / ||x||^2` over Halton samples, relaxed by a factor 2.
pub fn sampled_bounds(form: &dyn ClfForm, domain: &ClfDomain, p: usize, samples: u64) -> (f64, f64) {
    let n = form.state_dim();
    let with_theta = domain.theta_box.is_some();
    let dim = n + if with_theta { p } else { 0 };
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for k in 1..=samples {
        let h = halton(k, dim);
        let x = DVector::from_iterator(n, h[..n].iter().map(|u| (2.0 * u - 1.0) * domain.state_half_width));
        let th = match &domain.theta_box {
            Some(b) => DVector::from_vec(b.lerp(&h[n..])),
            None => DVector::zeros(p),
        };
        if form.check_params(&th).is_err() {
            continue;
        }
        let nx2 = x.norm_squared();
        if nx2 == 0.0 {
            continue;
        }
        let ratio = form.value(&x, &th) / nx2;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    (0.5 * lo, 2.0 * hi)
}

fn check_spd(pinv: &DMatrix<f64>) -> Result<(f64, f64)> {
    if pinv.nrows() != pinv.ncols() {
        return Err(Error::Dimension {
            what: "metric rows vs columns",
            expected: pinv.nrows(),
            got: pinv.ncols(),
        });
    }
    if !is_symmetric(pinv, 1e-12) {
        return Err(Error::validation("clf.matrix", "metric must be symmetric"));
    }
    let eig = jacobi_eigen(pinv, JACOBI_TOL);
    let (lmin, lmax) = (eig.min(), eig.max());
    if !(lmin > SPD_TOL) {
        return Err(Error::NotPositiveDefinite { min_eig: lmin });
    }
    Ok((lmin, lmax))
}

/// `V = scale * x^T M x`, independent of the parameters.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub metric: DMatrix<f64>,
    pub scale: f64,
}

impl ClfForm for QuadraticForm {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn state_dim(&self) -> usize {
        self.metric.nrows()
    }
    fn value(&self, x: &DVector<f64>, _th: &DVector<f64>) -> f64 {
        self.scale * x.dot(&(&self.metric * x))
    }
    fn grad_x(&self, x: &DVector<f64>, _th: &DVector<f64>) -> DVector<f64> {
        &self.metric * x * (2.0 * self.scale)
    }
    fn grad_theta(&self, _x: &DVector<f64>, th: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(th.len())
    }
    fn param_dependent(&self) -> bool {
        false
    }
    fn quadratic_form(&self, _th: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(&self.metric * (2.0 * self.scale))
    }
}

/// `V = x^T P^{-1} x` with `c1 = lambda_min`, `c2 = lambda_max`.
pub fn make_quadratic_clf(pinv: DMatrix<f64>, lambda: f64) -> Result<Clf> {
    make_scaled_quadratic_clf(pinv, lambda, 1.0)
}

/// `V = scale * x^T P^{-1} x`; `scale = 0.5` gives the `1/2 x^T P x` convention.
pub fn make_scaled_quadratic_clf(pinv: DMatrix<f64>, lambda: f64, scale: f64) -> Result<Clf> {
    if !(scale > 0.0) {
        return Err(Error::validation("clf.scale", "must be positive"));
    }
    let (lmin, lmax) = check_spd(&pinv)?;
    let form = QuadraticForm { metric: pinv, scale };
    Clf::new(
        Arc::new(form),
        scale * lmin,
        scale * lmax,
        lambda,
        ClfDomain::new(DEFAULT_STATE_HALF_WIDTH, None),
    )
}

/// Backstepping CLF for the strict-feedback plant:
/// `V = 1/2 x1^2 + 1/2 (x2 + theta^T phi1(x1) + lambda x1)^2`.
#[derive(Debug, Clone)]
pub struct BacksteppingForm {
    pub lambda: f64,
}

impl BacksteppingForm {
    fn z(&self, x: &DVector<f64>, th: &DVector<f64>) -> f64 {
        x[1] + th.dot(&StrictFeedback::phi1(x[0])) + self.lambda * x[0]
    }
}

impl ClfForm for BacksteppingForm {
    fn name(&self) -> &str {
        "backstepping"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn value(&self, x: &DVector<f64>, th: &DVector<f64>) -> f64 {
        let z = self.z(x, th);
        0.5 * x[0] * x[0] + 0.5 * z * z
    }
    fn grad_x(&self, x: &DVector<f64>, th: &DVector<f64>) -> DVector<f64> {
        let z = self.z(x, th);
        let dz_dx1 = th.dot(&StrictFeedback::phi1_prime(x[0])) + self.lambda;
        DVector::from_vec(vec![x[0] + z * dz_dx1, z])
    }
    fn grad_theta(&self, x: &DVector<f64>, th: &DVector<f64>) -> DVector<f64> {
        StrictFeedback::phi1(x[0]) * self.z(x, th)
    }
    fn param_dependent(&self) -> bool {
        true
    }
}

/// Default admissible box for the strict-feedback parameters.
pub fn example2_param_box() -> ParamBox {
    ParamBox::new(vec![-2.0; 4], vec![2.0; 4])
}

pub fn make_backstepping_clf(lambda: f64) -> Result<Clf> {
    let domain = ClfDomain::new(DEFAULT_STATE_HALF_WIDTH, Some(example2_param_box().inflated(0.5)));
    make_backstepping_clf_on(lambda, domain)
}

pub fn make_backstepping_clf_on(lambda: f64, domain: ClfDomain) -> Result<Clf> {
    if !(lambda > 0.0) {
        return Err(Error::validation("clf.lambda", "must be positive"));
    }
    Clf::with_sampled_bounds(Arc::new(BacksteppingForm { lambda }), lambda, domain, 4)
}

/// `V = Psi(x, theta)^T P^{-1} Psi(x, theta)` for the flexible-joint manipulator,
/// where `Psi` maps the state to the integrator-chain coordinates
/// `(x1, x2, x2', x2'')`.
#[derive(Debug, Clone)]
pub struct FeedbackLinearizationForm {
    pub metric: DMatrix<f64>,
    pub theta2_floor: f64,
}

impl FeedbackLinearizationForm {
    pub fn psi(x: &DVector<f64>, th: &DVector<f64>) -> DVector<f64> {
        let (s1, c1) = x[0].sin_cos();
        DVector::from_vec(vec![
            x[0],
            x[1],
            th[0] * s1 + th[1] * (x[2] - x[0]),
            th[0] * x[1] * c1 + th[1] * (x[3] - x[1]),
        ])
    }

    /// `dPsi/dx`, 4 x 4.
    pub fn psi_jacobian_x(x: &DVector<f64>, th: &DVector<f64>) -> DMatrix<f64> {
        let (s1, c1) = x[0].sin_cos();
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        j[(2, 0)] = th[0] * c1 - th[1];
        j[(2, 2)] = th[1];
        j[(3, 0)] = -th[0] * x[1] * s1;
        j[(3, 1)] = th[0] * c1 - th[1];
        j[(3, 3)] = th[1];
        j
    }

    /// `dPsi/dtheta`, 4 x 4 (the last two columns vanish).
    pub fn psi_jacobian_theta(x: &DVector<f64>) -> DMatrix<f64> {
        let (s1, c1) = x[0].sin_cos();
        let mut j = DMatrix::zeros(4, 4);
        j[(2, 0)] = s1;
        j[(2, 1)] = x[2] - x[0];
        j[(3, 0)] = x[1] * c1;
        j[(3, 1)] = x[3] - x[1];
        j
    }
}

impl ClfForm for FeedbackLinearizationForm {
    fn name(&self) -> &str {
        "feedback_linearization"
    }
    fn state_dim(&self) -> usize {
        4
    }
    fn value(&self, x: &DVector<f64>, th: &DVector<f64>) -> f64 {
        let psi = Self::psi(x, th);
        psi.dot(&(&self.metric * &psi))
    }
    fn grad_x(&self, x: &DVector<f64>, th: &DVector<f64>) -> DVector<f64> {
        let psi = Self::psi(x, th);
        Self::psi_jacobian_x(x, th).transpose() * (&self.metric * psi) * 2.0
    }
    fn grad_theta(&self, x: &DVector<f64>, th: &DVector<f64>) -> DVector<f64> {
        let psi = Self::psi(x, th);
        Self::psi_jacobian_theta(x).transpose() * (&self.metric * psi) * 2.0
    }
    fn param_dependent(&self) -> bool {
        true
    }
    fn check_params(&self, th: &DVector<f64>) -> Result<()> {
        check_dim("theta_hat", 4, th.len())?;
        if th[1].abs() < self.theta2_floor {
            return Err(Error::DegenerateTransform {
                value: th[1].abs(),
                floor: self.theta2_floor,
            });
        }
        Ok(())
    }
}

/// Default admissible box for the manipulator parameters (`theta_2 > 0`).
pub fn example3_param_box() -> ParamBox {
    ParamBox::new(vec![-2.0, 0.2, -2.0, -2.0], vec![2.0, 2.0, 2.0, 2.0])
}

/// Inflates the manipulator box and clamps `theta_2` to the floor.
pub fn example3_clf_theta_box(admissible: &ParamBox) -> ParamBox {
    let mut b = admissible.inflated(0.5);
    b.lo[1] = b.lo[1].max(THETA2_FLOOR);
    b
}

pub fn make_feedback_linearization_clf(pinv: DMatrix<f64>, lambda: f64) -> Result<Clf> {
    let domain = ClfDomain::new(
        DEFAULT_STATE_HALF_WIDTH,
        Some(example3_clf_theta_box(&example3_param_box())),
    );
    make_feedback_linearization_clf_on(pinv, lambda, domain)
}

pub fn make_feedback_linearization_clf_on(pinv: DMatrix<f64>, lambda: f64, domain: ClfDomain) -> Result<Clf> {
    check_dim("feedback-linearization metric", 4, pinv.nrows())?;
    check_spd(&pinv)?;
    if !(lambda > 0.0) {
        return Err(Error::validation("clf.lambda", "must be positive"));
    }
    let form = FeedbackLinearizationForm {
        metric: pinv,
        theta2_floor: THETA2_FLOOR,
    };
    Clf::with_sampled_bounds(Arc::new(form), lambda, domain, 4)
}

/// Outcome of a discretized vanishing-degree test at one `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct VanishingDegreeVerdict {
    pub r_tested: f64,
    pub finite: bool,
    pub sup_observed: f64,
    pub scales: Vec<f64>,
}

/// Probe radii and directions.
#[derive(Debug, Clone)]
pub struct ProbeSchedule {
    pub scales: Vec<f64>,
    pub directions: Vec<DVector<f64>>,
}

impl ProbeSchedule {
    /// 8 geometric scales from 1e-1 to 1e-5, 16 random unit directions plus
    /// both signs of every coordinate axis.
    pub fn default_for(n: usize, seed: u64) -> Self {
        let scales = geometric_scales(1e-1, 1e-5, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut directions = Vec::with_capacity(16 + 2 * n);
        while directions.len() < 16 {
            let d = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let norm = d.norm();
            if norm > 1e-3 {
                directions.push(d / norm);
            }
        }
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut e = DVector::zeros(n);
                e[i] = sign;
                directions.push(e);
            }
        }
        ProbeSchedule { scales, directions }
    }
}

pub fn geometric_scales(first: f64, last: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![first];
    }
    let ratio = (last / first).powf(1.0 / (count - 1) as f64);
    (0..count).map(|k| first * ratio.powi(k as i32)).collect()
}

/// `|| V^{1/r - 1} (dV/dx) Delta(x)^T ||_inf` at one point.
pub fn vanishing_degree_integrand(
    sys: &dyn UncertainSystem,
    clf: &Clf,
    x: &DVector<f64>,
    theta_hat: &DVector<f64>,
    r: f64,
) -> Result<f64> {
    let v = clf.value(x, theta_hat);
    if !(v > 0.0) {
        return Err(Error::ProbeDomain {
            x: x.as_slice().to_vec(),
        });
    }
    let row = sys.regressor(x) * clf.grad_x(x, theta_hat);
    Ok(v.powf(1.0 / r - 1.0) * row.amax())
}

/// Decides numerically whether the normalized regressor stays bounded as
/// `x -> 0` along every probe ray.
pub fn vanishing_degree_probe(
    sys: &dyn UncertainSystem,
    clf: &Clf,
    theta_samples: &[DVector<f64>],
    r: f64,
    directions: &[DVector<f64>],
    scales: &[f64],
) -> Result<VanishingDegreeVerdict> {
    if !(r > 0.0) {
        return Err(Error::validation("r", "must be positive"));
    }
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0)) || scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::validation("scales", "must be positive and strictly decreasing"));
    }
    for d in directions {
        check_dim("probe direction", sys.state_dim(), d.len())?;
        if (d.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::validation("directions", "must have unit norm"));
        }
    }
    let mut finite = true;
    let mut sup_observed = 0.0_f64;
    for th in theta_samples {
        clf.check_params(th)?;
        for d in directions {
            let g = scales
                .iter()
                .map(|&s| vanishing_degree_integrand(sys, clf, &(d * s), th, r))
                .collect::<Result<Vec<f64>>>()?;
            for &v in &g {
                sup_observed = sup_observed.max(v);
            }
            if !ray_is_bounded(&g) {
                finite = false;
            }
        }
    }
    Ok(VanishingDegreeVerdict {
        r_tested: r,
        finite,
        sup_observed,
        scales: scales.to_vec(),
    })
}

/// Bounded by `max(10 g_0, 1)` and the last value at most twice the median of
/// the last three.
fn ray_is_bounded(g: &[f64]) -> bool {
    if g.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let cap = (10.0 * g[0]).max(1.0);
    if g.iter().any(|&v| v > cap) {
        return false;
    }
    let k = g.len();
    if k >= 3 {
        let mut tail = [g[k - 3], g[k - 2], g[k - 1]];
        tail.sort_by(f64::total_cmp);
        if g[k - 1] > 2.0 * tail[1] {
            return false;
        }
    }
    true
}
