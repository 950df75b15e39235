use thiserror::Error;

/// Errors surfaced by allocation procedures, estimators and the study engine.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The procedure cannot produce a probability yet (burn-in, singular design).
    #[error("not ready: {0}")]
    NotReady(String),

    #[error("not estimable: {0}")]
    NotEstimable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported procedure: {0}")]
    UnsupportedProcedure(String),

    #[error("boundary probability: {0}")]
    Boundary(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SimError {
    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::InvalidParameter(_) => "invalid-parameter",
            SimError::NotReady(_) => "not-ready",
            SimError::NotEstimable(_) => "not-estimable",
            SimError::InvalidInput(_) => "invalid-input",
            SimError::UnsupportedProcedure(_) => "unsupported-procedure",
            SimError::Boundary(_) => "boundary",
            SimError::Config(_) => "config",
            SimError::Io(_) => "io",
            SimError::Json(_) => "json",
            SimError::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
