use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point ({x}, {y}) lies outside the {width} x {height} km field")]
    OutOfField { x: f64, y: f64, width: f64, height: f64 },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("arity mismatch: expected {expected}, got {actual}")]
    Arity { expected: usize, actual: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid training input: {0}")]
    TrainingInput(String),

    #[error("degenerate pairs: {0}")]
    DegeneratePairs(String),

    #[error("empty evaluation set")]
    EmptyEvaluation,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
