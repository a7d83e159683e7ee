use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("occupation {occupation} of mode {mode} exceeds cutoff {cutoff}")]
    IndexOutOfTruncation {
        mode: usize,
        occupation: usize,
        cutoff: usize,
    },
    #[error("truncation discards {tail:e} of the state (allowed {allowed:e})")]
    TruncationTooSevere { tail: f64, allowed: f64 },
    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("truncation mismatch between operand and channel")]
    TruncationMismatch,
    #[error("channel lost {loss:e} of trace")]
    TraceLossExceeded { loss: f64 },
    #[error("hermiticity correction {correction:e} too large")]
    HermiticityViolation { correction: f64 },
    #[error("eigenvalue {value:e} is negative beyond roundoff")]
    NegativeEigenvalue { value: f64 },
    #[error("derivative carries weight {weight:e} outside the retained support")]
    DegenerateSupport { weight: f64 },
    #[error("finite differences did not converge (relative change {change:e})")]
    NonConvergent { change: f64 },
    #[error("bound is singular: {0}")]
    SingularBound(&'static str),
    #[error("information matrix is singular (min eigenvalue {min_eigenvalue:e})")]
    SingularInformation { min_eigenvalue: f64 },
    #[error("probe has support above N0 = {n0}")]
    SupportExceedsN0 { n0: usize },
    #[error("conditioning event has zero probability")]
    ZeroProbabilityCondition,
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(&'static str),
    #[error("eigendecomposition did not converge")]
    EigenNonConvergence,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}
