use thiserror::Error;

/// Errors raised by model, protocol and simulation operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("kernel mismatch: {0:?} vs {1:?}")]
    KernelMismatch(crate::rkhs::KernelSpec, crate::rkhs::KernelSpec),

    #[error("model configuration is empty")]
    EmptyConfiguration,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("label {0} outside the {1} loss domain")]
    InvalidLabel(f64, &'static str),

    #[error("coordinator cache inconsistent at round {round}: learner {learner} holds a support vector the coordinator cannot resolve")]
    InconsistentCache { round: u64, learner: usize },

    #[error("numeric failure at round {round}, learner {learner}: {what}")]
    NumericFailure {
        round: u64,
        learner: usize,
        what: String,
    },

    #[error("data source: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
