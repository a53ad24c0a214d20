use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("column {0} has zero (or near-zero) standard deviation")]
    ConstantColumn(usize),

    #[error("inverse length-scale at index {0} is negative")]
    NegativeLengthScale(usize),

    #[error("marginal variance must be positive")]
    NonPositiveVariance,

    #[error("value {0} must be strictly positive")]
    NonPositiveValue(f64),

    #[error("matrix is not positive definite (escalated jitter up to {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("eigendecomposition failed: {0}")]
    DecompositionFailure(String),

    #[error("empty input")]
    EmptyInput,

    #[error("response does not match the likelihood family: {0}")]
    DomainMismatch(String),

    #[error("Newton iteration for the latent mode did not converge in {iters} iterations")]
    NewtonDivergence { iters: usize },

    #[error("every optimizer restart failed; last error: {0}")]
    AllRestartsFailed(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("PCA tail index {m} out of range ({available} usable components)")]
    PcaIndexOutOfRange { m: usize, available: usize },

    #[error("{failed} of {total} augmentation fits failed")]
    TooManyFailedFits { failed: usize, total: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Numerical failures (as opposed to bad input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::DecompositionFailure(_)
                | Error::NewtonDivergence { .. }
                | Error::AllRestartsFailed(_)
                | Error::TooManyFailedFits { .. }
        )
    }
}
