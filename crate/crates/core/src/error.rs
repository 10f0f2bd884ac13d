use thiserror::Error;

/// Errors raised by the numerical routines and the scenario loader.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (non-PSD covariance, bad dimensions, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("numerical integration did not converge: {context}")]
    Integration { context: String },

    /// Exhaustive constellation enumeration would exceed the supported size.
    #[error("enumeration guard exceeded for {group}: {size} points > {limit}; use a sampling estimator instead")]
    Capacity {
        group: String,
        size: f64,
        limit: usize,
    },

    /// NaN, overflow or another breakdown inside an iterative solver.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Fixed-point solution was requested but the solver stopped before converging.
    #[error("fixed point not converged after {iterations} iterations (residual {residual:e})")]
    Unconverged { iterations: usize, residual: f64 },

    /// Scenario or precoder file could not be interpreted.
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
