use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read config {path}: {source}")]
    ConfigIo {
        path: String,
        source: std::io::Error,
    },

    #[error("failed to parse config {path}: {message}")]
    ConfigParse { path: String, message: String },

    #[error("invalid config value for `{field}`: {message}")]
    ConfigValidation { field: String, message: String },

    #[error("evaluation point lies inside the magnet body")]
    PointInsideMagnet,

    #[error("dipole field requested at zero distance")]
    ZeroDistance,

    #[error("no local field minimum found in the search region")]
    NoMinimumFound,

    #[error("ensemble sampling failed: {0}")]
    SamplingFailure(String),

    #[error("numerical instability: relative energy drift {drift:.3e} exceeds {limit:.3e} in undriven mode")]
    Instability { drift: f64, limit: f64 },

    #[error("two-level oracle integration did not converge (|dP| = {0:.3e})")]
    OracleNonConvergence(f64),

    #[error("invalid Zeeman sublevel m_F = {0}; expected -2..=2")]
    InvalidSublevel(i32),

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::ConfigValidation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
