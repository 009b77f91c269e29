use thiserror::Error;

/// Errors raised by the numerical engine.
///
/// Variants are grouped by what went wrong rather than by module, so a
/// caller can tell a bad input (`Domain`, `InvalidParams`) from a failed
/// computation (`StepLimit`, `Quadrature`) from a broken structural
/// property (`Invariant`).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no center equilibrium exists for b = {0}")]
    NoCenter(f64),

    #[error("integration exceeded {steps} steps at t = {t}")]
    StepLimit { t: f64, steps: usize },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("event {index} not found before t = {t_end}")]
    EventNotFound { index: usize, t_end: f64 },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("root not bracketed: {0}")]
    NotBracketed(String),

    #[error("invalid quadrature bracket: {0}")]
    InvalidBracket(String),

    #[error("non-simple turning point: {0}")]
    SingularityOrder(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("not reachable: {0}")]
    NotReachable(String),

    #[error("inconsistent root: {0}")]
    InconsistentRoot(String),

    #[error("slope window too small: {0}")]
    WindowTooSmall(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors caused by a structural property failing, as
    /// opposed to bad input.
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Error::Invariant(_) | Error::InconsistentRoot(_))
    }
}
