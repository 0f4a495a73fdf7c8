use thiserror::Error;

/// Errors raised by the bandit library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty weight vector")]
    EmptyWeights,

    #[error("rejection sampling exhausted {budget} draws while {what}; consider widening the bracket or bounds")]
    RetryBudgetExhausted { what: &'static str, budget: u64 },

    #[error("known conservative reward required but absent")]
    MissingConservativeReward,

    #[error("incompatible runs: {0}")]
    Incompatible(String),

    #[error("too few episodes: need at least {required}, got {actual}")]
    TooFewEpisodes { required: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
