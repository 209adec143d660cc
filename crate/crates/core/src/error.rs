use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("disconnected network: {0}")]
    Disconnected(String),
    #[error("singular reduced susceptance matrix")]
    Singular,
    #[error("value function is not non-increasing in SoC: {0}")]
    NonMonotone(String),
    #[error("transition row is not stochastic: {0}")]
    NonStochastic(String),
    #[error("infeasible dispatch: {0}")]
    Infeasible(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("dual residuals above tolerance: {0}")]
    DirtyDuals(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
