use std::path::PathBuf;

use geo_core::GeoError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("unknown solver {name:?}; registered solvers: {}", registered.join(", "))]
    UnknownSolver { name: String, registered: Vec<String> },

    #[error("cannot resume cell {cell}: {message}")]
    Resume { cell: String, message: String },

    #[error("budget parity violated: {0}")]
    BudgetParity(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Geo(#[from] GeoError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<geo_core::engine::RunError> for HarnessError {
    fn from(e: geo_core::engine::RunError) -> Self {
        HarnessError::Geo(e.error)
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
