use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix {index} is rank deficient (singular value ratio {ratio:.3e})")]
    RankDeficiency { index: usize, ratio: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("quotient mean has a non-real eigenvalue {re} + {im}i")]
    NonRealSpectrum { re: f64, im: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("power constraint violated: {used} used of {budget} available")]
    ConstraintViolation { used: f64, budget: f64 },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver failure after {iterations} iterations: {message}")]
    SolverFailure {
        message: String,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
