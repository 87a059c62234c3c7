use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum RhoError {
    /// An argument violates an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),
    /// Quadrature or a linear solve failed to reach the requested accuracy.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The search could not complete a single full criterion evaluation.
    #[error("search error: {0}")]
    Search(String),
    /// A candidate set would exceed the configured size budget.
    #[error("candidate set needs {required} candidates, budget is {budget}")]
    Budget { required: u128, budget: u128 },
    /// Invalid study or fit configuration.
    #[error("config error: {0}")]
    Config(String),
    /// A study produced too many failed replications.
    #[error("study error: {0}")]
    Study(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RhoError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(RhoError::Domain(msg.into()))
}
