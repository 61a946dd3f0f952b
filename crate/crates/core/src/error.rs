use thiserror::Error;

/// Errors raised by spline fitting, network construction and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("weight bound violated in layer {layer}: |{value}| > 1")]
    WeightBound { layer: usize, value: f64 },

    #[error("collocation matrix is numerically singular")]
    Singular,

    #[error("coefficient {value} exceeds the multiplier range of depth parameter L = {l}")]
    CoefficientOverflow { value: f64, l: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
