use thiserror::Error;

/// Errors produced by model evaluation, transcription, solving and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A stance state violates the model's validity domain (y <= 0 or r ~ 0).
    #[error("invalid stance state: {0}")]
    InvalidState(String),

    /// Center of pressure is undefined because the denominator F_leg*sin(theta) is zero.
    #[error("undefined center of pressure: leg force times sin(theta) is zero")]
    UndefinedCop,

    /// A task or configuration cannot produce a feasible problem.
    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    /// A trajectory container is malformed (mismatched lengths, nonpositive duration, ...).
    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),

    /// A quantity left its mathematical domain (nonpositive distance, baseline, tolerance, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimension mismatch between a decision vector and an NLP layout.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An evaluator produced a non-finite value.
    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: usize },

    /// Numerical integration left the validity region.
    #[error("integration aborted at t = {time:.6}: {reason}")]
    IntegrationAborted { time: f64, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
