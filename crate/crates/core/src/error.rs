use thiserror::Error;

use crate::env::State;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("world generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: u32, reason: String },

    #[error("feature norm {norm} exceeds the unit ball")]
    FeatureNormExceeded { norm: f64 },

    #[error("feature has dimension {got}, estimator expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {need} observations to fit, have {have}")]
    InsufficientObservations { have: usize, need: usize },

    #[error("design matrix is numerically singular")]
    SingularDesign,

    #[error("newton iterations did not converge (score norm {score_norm:e})")]
    NewtonDivergence { score_norm: f64 },

    #[error("estimator has not been fitted")]
    NotFitted,

    #[error("{0} update produced an empty safe set")]
    EmptySafeSet(&'static str),

    #[error("planning set is empty")]
    EmptyPlanningSet,

    #[error("value iteration stalled after {sweeps} sweeps (residual {residual:e})")]
    ValueIterationStalled { sweeps: usize, residual: f64 },

    #[error("prior has {have} samples but the {which} estimator needs at least {need}")]
    InsufficientPrior {
        which: &'static str,
        have: usize,
        need: usize,
    },

    #[error("safety breach at step {step}: chose state {state:?} outside the pessimistic safe set")]
    SafetyBreach { step: usize, state: State },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
