use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A descent step could not restore strict monotonicity of the compressor.
    #[error("degenerate mapping: {0}")]
    DegenerateMapping(String),

    /// The orthogonality constraint cannot be met (zero-rate design).
    #[error("constraint infeasible: {0}")]
    ConstraintInfeasible(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, QuantError>;

pub(crate) fn invalid(msg: impl Into<String>) -> QuantError {
    QuantError::InvalidArgument(msg.into())
}
