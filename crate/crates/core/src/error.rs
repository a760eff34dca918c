use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mass matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("integration diverged at t = {t:.3} s")]
    IntegrationDiverged { t: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("non-finite {what} during training")]
    NonFinite { what: &'static str },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::IntegrationDiverged { .. } => "integration_diverged",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::InvalidConfig { .. } => "invalid_config",
            Error::NonFinite { .. } => "non_finite",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
