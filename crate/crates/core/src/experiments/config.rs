//! TOML scenario files and their resolution into a runnable [`Scenario`].

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clf::{
    example2_param_box, example3_clf_theta_box, example3_param_box, make_backstepping_clf_on,
    make_feedback_linearization_clf_on, make_scaled_quadratic_clf, vanishing_degree_probe, Clf, ClfDomain,
    ProbeSchedule, DEFAULT_STATE_HALF_WIDTH,
};
use crate::clf_synthesis::synthesize_p;
use crate::controllers::{Controller, MinNorm, ScalarExplicit};
use crate::dynamics::{
    make_example1, make_example2, make_example3, make_scalar_example, ParamBox, ScalarBasis, ScalarCustom,
    SharedSystem, TrueParameters,
};
use crate::error::{Error, Result};
use crate::estimators::{
    EstimatorLaw, EstimatorState, GainConfig, LimitingStyle, OmegaKind, DEFAULT_EPSILON, DEFAULT_OMEGA_SCALE,
    DEFAULT_V_FLOOR,
};
use crate::linalg::halton;
use crate::metrics::QKind;
use crate::simulation::{Horizon, Scenario, DEFAULT_CONV_TOL, DEFAULT_CONV_WINDOW, DEFAULT_DT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Scalar,
    Example1,
    Example2,
    Example3,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub kind: SystemKind,
    pub theta_true: Vec<f64>,
    /// Scalar regressor terms for `kind = "custom"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<ScalarBasis>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_hi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClfKind {
    Quadratic,
    Backstepping,
    FeedbackLinearization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    /// Pole placement plus Lyapunov solve on the system's nominal linear pair.
    Synthesize,
    Identity,
    Explicit,
}

fn default_lambda() -> f64 {
    1.0
}

fn default_metric() -> MetricSource {
    MetricSource::Synthesize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClfSection {
    pub kind: ClfKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_metric")]
    pub metric: MetricSource,
    /// Rows of `P^-1` when `metric = "explicit"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Quadratic CLFs only: use `V = x^T P^-1 x / 2` instead of `x^T P^-1 x`.
    #[serde(default)]
    pub half: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    MinNorm,
    ScalarExplicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: ControllerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Standard,
    ScalarNormalized,
    Normalized,
    Momentum,
    Limiting,
}

impl LawKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(LawKind::Standard),
            "scalar_normalized" => Ok(LawKind::ScalarNormalized),
            "normalized" => Ok(LawKind::Normalized),
            "momentum" => Ok(LawKind::Momentum),
            "limiting" => Ok(LawKind::Limiting),
            other => Err(Error::validation("law", format!("unknown law `{other}`"))),
        }
    }
}

fn default_r() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_omega_scale() -> f64 {
    DEFAULT_OMEGA_SCALE
}
fn default_v_floor() -> f64 {
    DEFAULT_V_FLOOR
}
fn default_omega() -> OmegaKind {
    OmegaKind::Arctan
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub law: LawKind,
    #[serde(default = "default_r")]
    pub r: f64,
    /// `Gamma = gamma * I`; ignored when `gamma_diag` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_diag: Option<Vec<f64>>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_omega")]
    pub omega: OmegaKind,
    #[serde(default = "default_omega_scale")]
    pub omega_scale: f64,
    #[serde(default)]
    pub omega_offset: f64,
    #[serde(default = "default_v_floor")]
    pub v_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limiting_style: Option<LimitingStyle>,
    /// Accept `r` even when the vanishing-degree probe rejects it.
    #[serde(default)]
    pub skip_vd_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x: Vec<f64>,
    pub theta_hat: Vec<f64>,
    #[serde(default)]
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_hat: Option<Vec<f64>>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_conv_tol() -> f64 {
    DEFAULT_CONV_TOL
}
fn default_conv_window() -> usize {
    DEFAULT_CONV_WINDOW
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_conv_tol")]
    pub conv_tol: f64,
    #[serde(default = "default_conv_window")]
    pub conv_window: usize,
    /// Write every k-th sample to CSV (the final sample is always written).
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub system: SystemSection,
    pub clf: ClfSection,
    pub controller: ControllerSection,
    pub estimator: EstimatorSection,
    pub initial: InitialSection,
    pub horizon: HorizonSection,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always serializable")
    }

    pub fn law(&self) -> Result<EstimatorLaw> {
        Ok(match self.estimator.law {
            LawKind::Standard => EstimatorLaw::Standard,
            LawKind::ScalarNormalized => EstimatorLaw::ScalarNormalized,
            LawKind::Normalized => EstimatorLaw::Normalized,
            LawKind::Momentum => EstimatorLaw::Momentum,
            LawKind::Limiting => EstimatorLaw::Limiting {
                style: self
                    .estimator
                    .limiting_style
                    .ok_or_else(|| Error::validation("estimator.limiting_style", "required for the limiting law"))?,
            },
        })
    }

    pub fn horizon(&self) -> Horizon {
        Horizon {
            t_final: self.horizon.t_final,
            dt: self.horizon.dt,
            conv_tol: self.horizon.conv_tol,
            conv_window: self.horizon.conv_window,
        }
    }

    pub fn build_system(&self) -> Result<SharedSystem> {
        Ok(match self.system.kind {
            SystemKind::Scalar => Arc::new(make_scalar_example()),
            SystemKind::Example1 => Arc::new(make_example1()),
            SystemKind::Example2 => Arc::new(make_example2()),
            SystemKind::Example3 => Arc::new(make_example3()),
            SystemKind::Custom => {
                let basis = self
                    .system
                    .basis
                    .clone()
                    .ok_or_else(|| Error::validation("system.basis", "required for kind = \"custom\""))?;
                Arc::new(ScalarCustom::new(basis)?)
            }
        })
    }

    /// Admissible box from the file, or the built-in default for the example.
    pub fn admissible_box(&self) -> Result<Option<ParamBox>> {
        match (&self.system.box_lo, &self.system.box_hi) {
            (Some(lo), Some(hi)) => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return Err(Error::validation("system.box_lo", "box bounds must pair up with lo <= hi"));
                }
                Ok(Some(ParamBox::new(lo.clone(), hi.clone())))
            }
            (None, None) => Ok(match self.system.kind {
                SystemKind::Example2 => Some(example2_param_box()),
                SystemKind::Example3 => Some(example3_param_box()),
                _ => None,
            }),
            _ => Err(Error::validation("system.box_hi", "box_lo and box_hi must be given together")),
        }
    }

    fn metric(&self, sys: &SharedSystem) -> Result<DMatrix<f64>> {
        let n = sys.state_dim();
        match self.clf.metric {
            MetricSource::Identity => Ok(DMatrix::identity(n, n)),
            MetricSource::Explicit => {
                let rows = self
                    .clf
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::validation("clf.matrix", "required for metric = \"explicit\""))?;
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::validation("clf.matrix", format!("must be {n}x{n}")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
            MetricSource::Synthesize => {
                let (a, b) = sys
                    .nominal_linear_pair()
                    .ok_or_else(|| Error::validation("clf.metric", "system has no nominal linear pair to synthesize on"))?;
                synthesize_p(&a, &b, self.clf.lambda, self.seed)?.metric()
            }
        }
    }

    pub fn build_clf(&self, sys: &SharedSystem, admissible: Option<&ParamBox>) -> Result<Clf> {
        let lambda = self.clf.lambda;
        match self.clf.kind {
            ClfKind::Quadratic => {
                let scale = if self.clf.half { 0.5 } else { 1.0 };
                make_scaled_quadratic_clf(self.metric(sys)?, lambda, scale)
            }
            ClfKind::Backstepping => {
                if self.system.kind != SystemKind::Example2 {
                    return Err(Error::validation("clf.kind", "backstepping CLF needs system example2"));
                }
                let theta_box = admissible.cloned().unwrap_or_else(example2_param_box).inflated(0.5);
                make_backstepping_clf_on(lambda, ClfDomain::new(DEFAULT_STATE_HALF_WIDTH, Some(theta_box)))
            }
            ClfKind::FeedbackLinearization => {
                if self.system.kind != SystemKind::Example3 {
                    return Err(Error::validation("clf.kind", "feedback-linearization CLF needs system example3"));
                }
                let theta_box = example3_clf_theta_box(&admissible.cloned().unwrap_or_else(example3_param_box));
                let domain = ClfDomain::new(DEFAULT_STATE_HALF_WIDTH, Some(theta_box));
                make_feedback_linearization_clf_on(self.metric(sys)?, lambda, domain)
            }
        }
    }

    pub fn gains(&self, p: usize) -> Result<GainConfig> {
        let e = &self.estimator;
        let gamma = match (&e.gamma_diag, e.gamma) {
            (Some(d), _) => {
                if d.len() != p {
                    return Err(Error::validation("estimator.gamma_diag", format!("must have {p} entries")));
                }
                DMatrix::from_diagonal(&DVector::from_column_slice(d))
            }
            (None, Some(g)) => DMatrix::identity(p, p) * g,
            (None, None) => DMatrix::identity(p, p),
        };
        let cfg = GainConfig {
            gamma,
            r: e.r,
            epsilon: e.epsilon,
            omega_kind: e.omega,
            omega_scale: e.omega_scale,
            omega_offset: e.omega_offset,
            v_floor: e.v_floor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves every section and runs load-time validation, including the
    /// vanishing-degree check of `r` for the normalized and momentum laws.
    pub fn build(&self) -> Result<Scenario> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        if self.horizon.output_stride == 0 {
            return Err(Error::validation("horizon.output_stride", "must be >= 1"));
        }
        let system = self.build_system()?;
        let (n, p) = (system.state_dim(), system.param_dim());
        let dims = [
            ("system.theta_true", p, self.system.theta_true.len()),
            ("initial.x", n, self.initial.x.len()),
            ("initial.theta_hat", p, self.initial.theta_hat.len()),
        ];
        for (field, want, got) in dims {
            if want != got {
                return Err(Error::validation(field, format!("expected {want} entries, got {got}")));
            }
        }
        let admissible = self.admissible_box()?;
        if let Some(b) = &admissible {
            if b.dim() != p {
                return Err(Error::validation("system.box_lo", format!("expected {p} entries")));
            }
        }
        let truth = TrueParameters::new(DVector::from_column_slice(&self.system.theta_true), admissible.clone())
            .map_err(|_| Error::validation("system.theta_true", "outside the admissible box"))?;

        let clf = self.build_clf(&system, admissible.as_ref())?;
        let law = self.law()?;
        let gains = self.gains(p)?;
        let controller: Arc<dyn Controller> = match self.controller.kind {
            ControllerKind::MinNorm => Arc::new(MinNorm),
            ControllerKind::ScalarExplicit => Arc::new(ScalarExplicit),
        };
        if self.controller.kind == ControllerKind::ScalarExplicit && (n != 1 || system.input_dim() != 1) {
            return Err(Error::validation("controller.kind", "scalar_explicit needs a scalar system"));
        }
        if law.uses_momentum() && self.clf.kind != ClfKind::Quadratic {
            return Err(Error::validation(
                "estimator.law",
                "momentum law needs a quadratic-form CLF (clf.kind = \"quadratic\")",
            ));
        }
        let a_hat = match (&self.initial.a_hat, law.uses_momentum()) {
            (Some(a), true) => {
                if a.len() != p {
                    return Err(Error::validation("initial.a_hat", format!("expected {p} entries")));
                }
                Some(DVector::from_column_slice(a))
            }
            (None, true) => Some(DVector::from_column_slice(&self.initial.theta_hat)),
            (Some(_), false) => return Err(Error::validation("initial.a_hat", "only used by the momentum law")),
            (None, false) => None,
        };
        let initial = EstimatorState::new(DVector::from_column_slice(&self.initial.theta_hat), self.initial.rho, a_hat);

        let scenario = Scenario {
            name: self.name.clone(),
            system,
            clf,
            controller,
            law,
            gains,
            theta_true: truth.theta,
            x0: DVector::from_column_slice(&self.initial.x),
            initial,
            horizon: self.horizon(),
            monitor: QKind::for_law(law),
        };
        scenario.validate().map_err(|e| match e {
            Error::Dimension { what, expected, got } => {
                Error::validation(what, format!("expected dimension {expected}, got {got}"))
            }
            other => other,
        })?;

        if matches!(law, EstimatorLaw::Normalized | EstimatorLaw::Momentum) && !self.estimator.skip_vd_check {
            let verdict = probe_scenario(&scenario, self.estimator.r, self.seed)?;
            if !verdict.finite {
                return Err(Error::validation(
                    "estimator.r",
                    format!(
                        "r = {} exceeds the probed vanishing degree (sup observed {:e}); set skip_vd_check = true to override",
                        self.estimator.r, verdict.sup_observed
                    ),
                ));
            }
        }
        Ok(scenario)
    }
}

/// Parameter samples for the probe: the true value, the initial estimate and
/// four low-discrepancy points of the CLF's parameter box.
pub fn probe_theta_samples(scenario: &Scenario) -> Vec<DVector<f64>> {
    let p = scenario.p();
    let mut out = vec![scenario.theta_true.clone(), scenario.initial.theta_hat.clone()];
    if let Some(b) = &scenario.clf.domain.theta_box {
        for k in 1..=4 {
            out.push(DVector::from_vec(b.lerp(&halton(k, p))));
        }
    }
    out
}

pub fn probe_scenario(scenario: &Scenario, r: f64, seed: u64) -> Result<crate::clf::VanishingDegreeVerdict> {
    let schedule = ProbeSchedule::default_for(scenario.n(), seed);
    vanishing_degree_probe(
        scenario.system.as_ref(),
        &scenario.clf,
        &probe_theta_samples(scenario),
        r,
        &schedule.directions,
        &schedule.scales,
    )
}
