use thiserror::Error;

/// Errors raised while constructing models, scoring configurations or
/// running searches.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("time {time} is outside the admissible range {min}..={max}")]
    OutOfRange { time: usize, min: usize, max: usize },

    #[error("time {time} is listed more than once in component {component}")]
    Duplicate { time: usize, component: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("regime means are undefined for a configuration without changepoints")]
    EmptyModel,

    #[error("no swap move is possible from a configuration with m = {m} of {len} positions")]
    NoSwapPossible { m: usize, len: usize },

    #[error("error process is not stationary (companion spectral radius {0:.4} >= 1)")]
    NonStationary(f64),

    #[error("objective {0} is not defined for this series mode")]
    UnsupportedObjective(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short machine-friendly name of the variant, used in diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfRange { .. } => "OutOfRange",
            Error::Duplicate { .. } => "Duplicate",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::DegenerateDesign(_) => "DegenerateDesign",
            Error::SingularMatrix(_) => "SingularMatrix",
            Error::EmptyModel => "EmptyModel",
            Error::NoSwapPossible { .. } => "NoSwapPossible",
            Error::NonStationary(_) => "NonStationary",
            Error::UnsupportedObjective(_) => "UnsupportedObjective",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
