use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("singular profile: phi = {phi:e} at interior node {index} (x = {x})")]
    SingularProfile { index: usize, x: f64, phi: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no neck found: {0}")]
    NoNeck(String),

    #[error("non-finite update at t = {t} (step {step}); dt too large or past the singular time")]
    BlowUpOverrun { t: f64, step: u64 },

    #[error("cannot normalize: curvature at the base point is {0:e}")]
    ZeroCurvature(f64),

    #[error("no estimate: {0}")]
    NoEstimate(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
