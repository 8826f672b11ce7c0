use thiserror::Error;

/// Errors shared by all marginlab modules.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an evaluator.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A direction was requested from a predictor with (numerically) zero norm.
    #[error("zero vector has no direction")]
    ZeroVector,

    /// An iterate left the representable range; signals divergence, e.g. an
    /// uncertified exponential-loss descent run with a large step size.
    #[error("non-finite iterate at step/time {at}")]
    NonFinite { at: f64 },

    /// The adaptive integrator step collapsed below the resolution floor.
    #[error("integrator step underflow at t = {t}")]
    StepUnderflow { t: f64 },

    /// A monitor or certifier was applied to a trajectory from the wrong optimizer.
    #[error("wrong method: expected {expected}, got {got}")]
    WrongMethod { expected: &'static str, got: String },

    /// The bound kind cannot be evaluated against this trajectory/loss combination.
    #[error("incompatible query: {0}")]
    IncompatibleQuery(String),

    /// A theorem's parameter box is not met by the run at hand. Reported as a
    /// status rather than treated as a failure.
    #[error("precondition not met: {0}")]
    PreconditionNotMet(String),

    #[error("horizon {got} too short, need at least {needed}")]
    HorizonTooShort { needed: usize, got: usize },

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
