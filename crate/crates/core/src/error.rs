use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: outcome count must be at least 2")]
    InvalidDimension(usize),

    #[error("singular argument: {0}")]
    Singularity(String),

    #[error("invalid probability: {0}")]
    InvalidProbability(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("enumeration needs {needed} terms, budget is {budget}")]
    Budget { needed: f64, budget: f64 },

    #[error("structural check failed: {0}")]
    Structural(String),
}

pub(crate) fn check_dimension(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    Ok(())
}
