use thiserror::Error;

use crate::dynamics::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("box has an infinite endpoint at coordinate {index}")]
    UnboundedBox { index: usize },

    #[error("dimension {n} exceeds the corner enumeration limit {limit}")]
    TooManyCorners { n: usize, limit: usize },

    #[error("embedding state is not ordered at coordinate {index}")]
    OrderViolation { index: usize },

    #[error("interval lower bound exceeds upper bound at coordinate {index}")]
    InvalidInterval { index: usize },

    #[error("state became non-finite at t = {time}")]
    Blowup { time: f64, prefix: Box<Trajectory> },

    #[error("state lies outside the statespace")]
    OutsideStatespace,

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid incidence matrix: {0}")]
    InvalidIncidence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
