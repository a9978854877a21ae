use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A quantizer cell carries no probability mass, so its centroid is undefined.
    #[error("empty cell ({lower}, {upper}]")]
    EmptyCell { lower: f64, upper: f64 },

    #[error("ill-posed environment: {0}")]
    IllPosedEnvironment(String),

    #[error("inconsistent game state: {0}")]
    StateConsistency(String),

    #[error("no communication chain from agent {from} to agent {to}")]
    NoChain { from: usize, to: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
