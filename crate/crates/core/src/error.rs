use thiserror::Error;

/// Errors produced by the simulator core.
#[derive(Debug, Error)]
pub enum SimError {
    /// Mismatched array/lattice dimensions.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: String,
    },

    /// Invalid input values (non-finite, out of allowed range, bad config).
    #[error("validation error: {0}")]
    Validation(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An eigenvalue sits inside the zero-mode tolerance band, so the
    /// Dirac-sea vacuum is not uniquely defined.
    #[error("ambiguous vacuum: eigenvalue {value:e} within zero-mode tolerance {tolerance:e}")]
    AmbiguousVacuum { value: f64, tolerance: f64 },

    /// Numerical failure (non-convergence, NaN, overflow).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Operation not defined for the given state (e.g. momentum-resolved
    /// observables on an open chain).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A run that aborted midway; the partial trajectory is preserved.
    #[error("run aborted at t = {time}: {message}")]
    Aborted {
        time: f64,
        message: String,
        partial: Box<crate::dynamics::EvolutionResult>,
    },

    /// I/O failures while reading configs or writing outputs.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    pub fn validation(msg: impl Into<String>) -> Self {
        SimError::Validation(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        SimError::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        SimError::Numerical(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        SimError::Unsupported(msg.into())
    }
}
