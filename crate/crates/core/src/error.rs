use thiserror::Error;

/// Domain errors raised by the closed-form models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{quantity} must be positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },

    #[error("distance {distance} m lies inside the reference distance {ref_distance} m")]
    InsideReferenceDistance { distance: f64, ref_distance: f64 },

    #[error("shadowing deviation is zero, the path-loss density is undefined")]
    ZeroSigma,

    #[error("invalid radio parameters: {0}")]
    InvalidRadio(String),
}

/// Rejected scenario or MAC/routing configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}
