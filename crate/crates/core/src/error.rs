use ndarray_linalg::error::LinalgError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Fock truncation n_max = {0} is too small (need at least 2)")]
    InvalidTruncation(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("steady state is not unique (second smallest singular value {0:.3e} relative to the largest)")]
    DegenerateSteadyState(f64),

    #[error("steady-state residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    SteadyStateResidual { residual: f64, tolerance: f64 },

    #[error("constrained solve is rank deficient: residual {0:.3e}")]
    SingularSystem(f64),

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("cumulant has imaginary part {imag:.3e} beyond tolerance")]
    NonRealCumulant { imag: f64 },

    #[error("finite-difference cumulants unstable between h and h/2: {0}")]
    UnstableDerivative(String),

    #[error("top Fock level population {population:.3e} exceeds {limit:.1e}; raise n_max")]
    TruncationOverflow { population: f64, limit: f64 },

    #[error("automatic truncation did not converge up to n_max = {0}")]
    TruncationNotConverged(usize),

    #[error("need at least {needed} trajectory records, got {got}")]
    InsufficientRecords { needed: usize, got: usize },

    #[error("covariance matrix violates the uncertainty principle: nu = {0:.10}")]
    UncertaintyViolation(f64),

    #[error("invalid sweep specification: {0}")]
    InvalidSpec(String),

    #[error("linear algebra: {0}")]
    Linalg(#[from] LinalgError),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
