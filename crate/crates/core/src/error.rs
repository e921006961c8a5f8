use thiserror::Error;

use crate::exprlang::ExprError;

pub type Result<T, E = QcError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QcError {
    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("invalid endomorphism: {0}")]
    InvalidEndo(String),

    #[error("degenerate coframe: singular values {singular_values:?}")]
    DegenerateCoframe { singular_values: Vec<f64> },

    #[error("degenerate Levi form: omega_{index} is singular on H")]
    DegenerateLevi { index: usize },

    #[error("recovered endomorphisms are not quaternionic (residual {residual:.3e})")]
    NotQuaternionic { residual: f64 },

    #[error("recovered metric is not positive definite ({0})")]
    NotPositive(String),

    #[error("Biquard condition fails at {point:?}: residual {residual:.3e} > {tolerance:.1e}")]
    BiquardConditionFail {
        point: Vec<f64>,
        residual: f64,
        tolerance: f64,
    },

    #[error("ill-conditioned Reeb system: minimal singular value {min_singular:.3e}")]
    IllConditioned { min_singular: f64 },

    #[error("connection does not preserve Q along xi_{index}: residual {residual:.3e}")]
    QPreservationFail { index: usize, residual: f64 },

    #[error("torsion structure check `{check}` failed: residual {residual:.3e}")]
    TorsionStructureFail { check: &'static str, residual: f64 },

    #[error("finite-difference noise dominates: step-halving disagreement {disagreement:.3e}")]
    StepTooSmall { disagreement: f64 },

    #[error("conformal factor is not positive at {point:?} (value {value})")]
    NonPositiveFactor { point: Vec<f64>, value: f64 },

    #[error("unsupported quaternionic dimension n = {0}")]
    UnsupportedDimension(usize),

    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("validation failed at {point:?}: {invariant} residual {residual:.3e}")]
    Validation {
        point: Vec<f64>,
        invariant: String,
        residual: f64,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QcError {
    fn from(e: std::io::Error) -> Self {
        QcError::Io(e.to_string())
    }
}
