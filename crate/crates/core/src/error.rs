use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("kernel singularity at |x| = {norm:e} (regularization eps = {eps:e})")]
    Singularity { norm: f64, eps: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite state in replica {replica} at step {step}, particle {particle}")]
    BlowUp {
        replica: usize,
        step: usize,
        particle: usize,
    },

    #[error("explicit Euler step {dt:e} violates the stability limit; use dt <= {required:e}")]
    Stability { dt: f64, required: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("metadata mismatch: {0}")]
    Mismatch(String),

    #[error("histogram estimator refuses dimension {dim} (max {max}); use the k-NN estimator with Pinsker instead")]
    HistogramDimension { dim: usize, max: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
