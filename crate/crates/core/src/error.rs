use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Parameters fall outside the mean-square stability region.
    #[error("unstable: {0}")]
    Unstable(String),

    #[error("infeasible design: {0}")]
    Infeasible(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },

    #[error("config: {0}")]
    Config(String),
}
