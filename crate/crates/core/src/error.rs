use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("infeasible LP solution: {0}")]
    InfeasibleSolution(String),

    #[error("LP solver failure: {0}")]
    Solver(String),

    /// An exact computation would need more work units than allowed.
    #[error("work budget exceeded: need {required} units, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid_arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
