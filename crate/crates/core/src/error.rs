use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge: best estimate {best:e}, achieved error {achieved:e}, requested {requested:e}")]
    NonConvergence {
        best: f64,
        achieved: f64,
        requested: f64,
    },

    #[error("integrand grows too fast: far-field contributions do not decay (last ratio {ratio:.3})")]
    GrowthViolation { ratio: f64 },

    #[error("sigma is numerically singular at x = {x:?}: smallest singular value {value:e} below floor {floor:e}")]
    SingularSigma { x: Vec<f64>, value: f64, floor: f64 },

    #[error("log-magnitude {log_magnitude:.3} exceeds saturation bound {bound} at radius {radius:e}")]
    Saturation {
        log_magnitude: f64,
        bound: f64,
        radius: f64,
    },

    #[error("numeric guard tripped at step {step} (t = {time}): state magnitude exceeds the exponent guard")]
    NumericGuard { step: usize, time: f64 },

    #[error("ODE step control failed at t = {time}")]
    StepControl { time: f64 },

    #[error("target is not integrable: {0}")]
    NonIntegrable(String),

    #[error("expression error: {0}")]
    Expression(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
