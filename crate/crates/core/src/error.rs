use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
