use thiserror::Error;

use crate::dynamics::State;

/// Errors produced by the toolkit.
///
/// Domain, bracket and geometry failures are caller-visible outcomes of a
/// numerical search; `Validation` is reserved for bad user input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("integration failed at t={t}: {reason} (last good state {state:?})")]
    Integration {
        t: f64,
        state: State,
        reason: String,
    },

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("no Hopf threshold: sigma - b - 1 = {0} is not positive")]
    NoThreshold(f64),

    #[error("Newton did not converge after {} iterations (last residual {:e})", .residuals.len(), .residuals.last().copied().unwrap_or(f64::NAN))]
    Convergence { residuals: Vec<f64> },

    #[error("trajectory diverged at t={t}; partial exponent estimates {partial:?}")]
    Diverged { t: f64, partial: [f64; 3] },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
