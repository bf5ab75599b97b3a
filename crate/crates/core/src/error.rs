use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tensor with {entries} entries exceeds the budget of {budget}")]
    Resource { entries: u128, budget: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("double root at lambda = lambda_s = {lambda}")]
    DegenerateRoot { lambda: f64 },

    #[error("q_* is undefined at lambda = lambda_c (lambda = {lambda}, lambda_c = {lambda_c})")]
    AmbiguousAtThreshold { lambda: f64, lambda_c: f64 },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(
        "effective sample size {ess:.1} is below {min}; the importance weights are heavy-tailed, \
         reduce lambda or N"
    )]
    HeavyTail { ess: f64, min: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed table: {0}")]
    Table(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
