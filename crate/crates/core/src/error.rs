use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// State vectors carried by the numeric variants are copied out so the
/// error stays `'static` and can cross thread boundaries in sweeps.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("non-finite plant derivative at x = {x:?}")]
    NonFiniteDynamics { x: Vec<f64> },

    #[error("non-finite estimator update at x = {x:?}, theta_hat = {theta_hat:?}")]
    NonFiniteUpdate { x: Vec<f64>, theta_hat: Vec<f64> },

    #[error("RK4 stage {stage} produced a non-finite derivative")]
    NonFiniteStage { stage: usize },

    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("feedback-linearizing transform degenerate: |theta_hat2| = {value} < floor {floor}")]
    DegenerateTransform { value: f64, floor: f64 },

    #[error("V vanishes at nonzero probe point x = {x:?}")]
    ProbeDomain { x: Vec<f64> },

    #[error("input matrix is not full column rank (Gram determinant {gram_det:e})")]
    RankDeficient { gram_det: f64 },

    #[error("matrix is not Hurwitz")]
    NotHurwitz,

    #[error("Kronecker system for the Lyapunov equation is numerically singular")]
    SolveSingular,

    #[error("pair (A, B) is not controllable")]
    NotControllable,

    #[error("Finsler certificate failed: max eigen-residual {residual:e}")]
    CertificateFailed { residual: f64 },

    #[error("CLF condition violated at x = {x:?}, theta_hat = {theta_hat:?}: decrease required but input gain vanishes")]
    ClfViolation { x: Vec<f64>, theta_hat: Vec<f64> },

    #[error("momentum law requires the auxiliary estimate a_hat")]
    MissingAuxState,

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for the errors that mean "the closed loop left the finite regime",
    /// as opposed to a configuration problem.
    pub fn is_numeric_failure(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteDynamics { .. }
                | Error::NonFiniteUpdate { .. }
                | Error::NonFiniteStage { .. }
                | Error::ClfViolation { .. }
                | Error::DegenerateTransform { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
