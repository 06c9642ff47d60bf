use thiserror::Error;

/// Errors produced across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {value} is outside the domain {domain}")]
    Domain { what: &'static str, value: f64, domain: &'static str },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("constraints are infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (kkt residual {kkt_residual:e})")]
    NotConverged { iterations: usize, kkt_residual: f64, best: Vec<f64> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
