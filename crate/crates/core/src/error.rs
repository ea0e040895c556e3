use thiserror::Error;

/// Errors raised by the design, power and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SsrError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("unsupported dimension {got} (at most {max} coordinates)")]
    UnsupportedDimension { got: usize, max: usize },
    #[error("failed to converge: {0}")]
    Convergence(String),
    #[error("degenerate dose-response profile: {0}")]
    DegenerateProfile(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("insufficient samples: got {got}, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("posterior curvature error: {0}")]
    Curvature(String),
}

impl SsrError {
    /// True for failures of an iterative numerical procedure (root search,
    /// mode search) rather than bad input.
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            SsrError::Convergence(_) | SsrError::Numeric(_) | SsrError::Curvature(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SsrError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(SsrError::Domain(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SsrError::Invalid(msg.into()))
}
