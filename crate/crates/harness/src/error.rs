use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("metric `{metric}` needs the oracle: {source}")]
    OracleCap {
        metric: String,
        source: nonzero_core::Error,
    },

    #[error(transparent)]
    Core(#[from] nonzero_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("trace verification failed: {0} violation(s)")]
    Verify(usize),
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        use nonzero_core::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::Parse(_) => 2,
            HarnessError::OracleCap { .. } => 3,
            HarnessError::Core(E::CapExceeded { .. }) => 3,
            HarnessError::Core(E::NumericFailure(_)) => 4,
            HarnessError::Core(_) => 2,
            HarnessError::Io(_) | HarnessError::Json(_) | HarnessError::Verify(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
