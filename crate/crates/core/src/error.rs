use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("smoothing parameter p = {0} must lie strictly inside (0, 1)")]
    SmoothingOutOfRange(f64),

    #[error("sum order {order} exceeds the supported maximum of {max}")]
    OrderTooLarge { order: usize, max: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("overlap matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("overlap matrix condition estimate {condition:.3e} exceeds {limit:.0e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("design rejected for kappa = {kappa}, p = {p}, K_X = {model_order}: {reason}")]
    RejectedDesign {
        kappa: usize,
        p: f64,
        model_order: usize,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("initial noise variance must be non-negative, got {0}")]
    NegativeVariance(f64),

    #[error("sample {index} is not finite ({value})")]
    NonFiniteSample { index: u64, value: f64 },

    #[error("distortion stays below 1/2 up to the Nyquist frequency")]
    NoCrossing,

    #[error("impulse response did not converge within {0} samples")]
    NoConvergence(usize),

    #[error("integer transform overflows at order {0}")]
    TransformOverflow(usize),

    #[error("{kind} detector needs at least {needed} derivative outputs, design has {got}")]
    IncompatibleDerivatives {
        kind: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("paired filters are incompatible: {0}")]
    IncompatiblePair(String),
}
