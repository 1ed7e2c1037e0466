use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter or configuration value is outside its admissible domain.
    Config(String),
    LengthMismatch {
        expected: usize,
        found: usize,
    },
    /// Adaptive integration could not make progress.
    StepUnderflow {
        t: f64,
        step: f64,
    },
    /// A maneuver target cannot be reached by any positive penalty.
    InfeasibleTarget {
        node: usize,
        target: f64,
        low: f64,
        high: f64,
    },
    /// A root-finding or fixed-point routine produced no admissible answer.
    Numeric(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::StepUnderflow { t, step } => {
                write!(f, "integration failed at t={t}: step {step:e} below 1e-12")
            }
            Error::InfeasibleTarget { node, target, low, high } => {
                write!(f, "infeasible target beta={target} for node {node}: achievable interval is ({low}, {high})")
            }
            Error::Numeric(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
