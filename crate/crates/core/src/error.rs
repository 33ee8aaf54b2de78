use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("exact phase requested outside its numeric range (|r - r_A| / lambda = {ratio:e}); use the far-field form")]
    ExactPhaseOutOfRange { ratio: f64 },

    #[error("quadrature did not converge: refinement changed the result by {change:e} (tolerance {tolerance:e})")]
    NonConvergence { change: f64, tolerance: f64 },

    #[error("state is not normalized (norm^2 = {norm_sqr})")]
    Unnormalized { norm_sqr: f64 },

    #[error("state has support outside {expected}")]
    UnsupportedState { expected: &'static str },

    #[error("insufficient baseline span: {0}")]
    InsufficientBaseline(String),

    #[error("no oscillation detected: spectral peak at {snr_db:.1} dB is below the {threshold_db:.1} dB threshold")]
    NoOscillation { snr_db: f64, threshold_db: f64 },

    #[error("expected frequency {expected:e} cycles/m exceeds the Nyquist limit {nyquist:e} cycles/m of the baseline sampling")]
    Nyquist { expected: f64, nyquist: f64 },

    #[error("curve is empty: {0}")]
    EmptyCurve(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
