use thiserror::Error;

/// Errors raised by the planning library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid action space: {0}")]
    InvalidSpace(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("infeasible deviation: agent {agent} already plays {target}")]
    InfeasibleDeviation { agent: usize, target: usize },

    #[error("invalid direction pair: both directions move agent {0}")]
    InvalidPair(usize),

    #[error("no distinct-agent direction pair exists with a single agent")]
    NoPairAvailable,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty supervision batch")]
    EmptyBatch,

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("enumeration cap exceeded: {needed} entries > cap {cap}")]
    CapExceeded { needed: String, cap: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("inconsistent supervision target: {0}")]
    InconsistentTarget(String),

    #[error("series must be positive on the fit window (value {value} at t = {t})")]
    NonPositiveSeries { t: usize, value: f64 },

    #[error("local maximizer set is empty")]
    EmptyLocalSet,
}

pub type Result<T> = std::result::Result<T, Error>;
