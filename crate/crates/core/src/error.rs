use thiserror::Error;

/// Errors produced by relation construction, approximation and certification.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("budget exceeded: {what} needs {requested}, cap is {cap}")]
    BudgetExceeded {
        what: &'static str,
        requested: f64,
        cap: f64,
    },

    #[error("landmark budget exceeded at delta = {delta:e}: lattice needs {n} landmarks, cap is {cap}")]
    LandmarkBudget { delta: f64, n: f64, cap: usize },

    #[error(
        "continuity violation: modulus stayed at {modulus:e} > {target:e} after {steps} bisection steps (delta = {delta:e})"
    )]
    ContinuityViolation {
        modulus: f64,
        target: f64,
        delta: f64,
        steps: usize,
    },

    #[error("spectrum too flat: residual {residual:e} at full rank {rank} exceeds {target:e}")]
    SpectrumTooFlat {
        residual: f64,
        rank: usize,
        target: f64,
    },

    #[error("kernel is not positive semi-definite: eigenvalue {min_eigenvalue:e} against largest {max_eigenvalue:e}")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("certification failed: measured error {measured:e} exceeds target {target:e}")]
    Certification { measured: f64, target: f64 },

    #[error("feature series tail too heavy: residual {residual:e} at cap {cap} exceeds {target:e}")]
    TailTooHeavy {
        residual: f64,
        cap: usize,
        target: f64,
    },

    #[error("filter output {image:?} at point {point:?} escapes the feature box")]
    DomainViolation { point: Vec<f64>, image: Vec<f64> },

    #[error("every sampled margin is zero; the utility cannot separate context elements")]
    ZeroMargin,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
