use thiserror::Error;

/// Errors produced anywhere in the OTFS simulation chain.
#[derive(Debug, Error)]
pub enum OtfsError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix does not have the required {0} structure")]
    Structure(&'static str),

    #[error("numerical failure in {context}")]
    NumericalFailure { context: String },

    /// A quantity that must be strictly positive (noise variance, interference
    /// variance) was not.
    #[error("numerically degenerate input: {0}")]
    Degenerate(String),

    #[error("receiver iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<OtfsError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = OtfsError> = std::result::Result<T, E>;

impl OtfsError {
    pub(crate) fn numerical(context: impl Into<String>) -> Self {
        OtfsError::NumericalFailure { context: context.into() }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        OtfsError::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(OtfsError::LengthMismatch { expected, got })
    }
}
