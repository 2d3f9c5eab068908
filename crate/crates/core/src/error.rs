use thiserror::Error;

/// Errors produced by estimation, simulation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {x} lies outside the domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design block of group {group} is identically zero")]
    ZeroBlock { group: usize },

    #[error("rank deficient design: {0}")]
    RankDeficient(String),

    #[error("linear system is singular or ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("insufficient local data: {effective} points carry positive kernel weight, {required} needed")]
    InsufficientLocalData { effective: usize, required: usize },

    #[error("{failures} of {reps} replications failed, above the 5% limit")]
    TooManyFailures { failures: usize, reps: usize },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad input or configuration rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Malformed(_) | Error::Csv(_) | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
