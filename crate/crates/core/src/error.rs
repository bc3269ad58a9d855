use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs disagree on a dimension.
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A frame column coincides (up to phase) with another one.
    #[error("degenerate frame column {column}: ball radius {radius} is not positive")]
    DegenerateColumn { column: usize, radius: f64 },

    /// A matrix that must be inverted is (numerically) singular or rank deficient.
    #[error("singular or rank-deficient matrix: {0}")]
    Singular(&'static str),

    /// An iterative solver ran out of steps.
    #[error("solver did not converge within {steps} steps")]
    NonConvergence { steps: usize, last_iterate: Vec<f64> },

    /// An iteration blew up (variance growth beyond the divergence guard).
    #[error("divergence at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: &'static str },

    /// A message became NaN or infinite.
    #[error("non-finite message at iteration {iteration}, edge {edge}")]
    NonFinite { iteration: usize, edge: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::NonConvergence { .. }
                | Error::Divergence { .. }
                | Error::NonFinite { .. }
        )
    }
}
