use crate::bits::Bitstring;

pub type Result<T, E = GeoError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A dataset row has exactly zero probability under the model, so the
    /// negative log-likelihood is infinite.
    #[error("row {row} is outside the model support")]
    OutOfSupport { row: Bitstring },

    #[error("invalid candidate: expected Hamming weight {expected}, found {found}")]
    InvalidCandidate { expected: usize, found: usize },

    #[error("numerical failure after {iterations} iterations: {detail} (residual {residual:e})")]
    NumericalFailure {
        iterations: usize,
        residual: f64,
        detail: String,
    },

    #[error("every grid point of the efficient frontier is infeasible")]
    EmptyFrontier,

    #[error("evaluation budget of {budget} calls exhausted")]
    BudgetExhausted { budget: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GeoError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GeoError::InvalidArgument(msg.into())
    }
}
