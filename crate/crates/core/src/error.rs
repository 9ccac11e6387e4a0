use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("invalid kernel: {0}")]
    Validation(String),

    #[error("search budget exceeded: {candidates} candidate orders > budget {budget}")]
    BudgetExceeded { candidates: u128, budget: u128 },

    #[error("unsupported loop order: {0}")]
    UnsupportedOrder(String),

    #[error("resource limit: {0}")]
    Resource(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
