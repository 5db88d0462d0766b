use thiserror::Error;

/// Errors produced by the simulation and capacity routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("moment of order {order} does not exist for {law}")]
    Divergence { law: String, order: f64 },

    #[error("{what} did not converge after {iterations} iterations (achieved {achieved:.3e}, wanted {wanted:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        achieved: f64,
        wanted: f64,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
