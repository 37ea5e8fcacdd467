use thiserror::Error;

/// Errors raised by the expansion engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} is outside its domain (got {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),

    #[error("ODE solution of `{function}` became non-finite at t = {time}")]
    BlowUp { function: &'static str, time: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),

    #[error("time {t} lies outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("approximation order {0} is not one of 0, 1, 2")]
    InvalidOrder(u8),

    #[error("missing input: {0}")]
    MissingInput(&'static str),

    #[error("integrability diagnostic failed: {0}")]
    Integrability(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
