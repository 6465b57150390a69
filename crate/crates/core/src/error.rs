use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("no sign change of the characteristic function found while scanning λ ∈ [{lo}, {hi}]")]
    Bracketing { lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("insufficient basis: {0}")]
    InsufficientBasis(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("ξ = {0} lies outside [0, 1]")]
    Domain(f64),

    #[error("invalid delay field: {0}")]
    InvalidDelay(String),

    #[error("history lookup at s = {s} is older than the retained window starting at {oldest}")]
    OutOfWindow { s: f64, oldest: f64 },

    #[error("history lookup at s = {s} is ahead of the newest sample at {head}")]
    Future { s: f64, head: f64 },

    #[error("step size: {0}")]
    StepSize(String),

    #[error("divergence at t = {0}")]
    Divergence(f64),

    #[error("decay fit: {0}")]
    Fit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("integrator failed: {0}")]
    Integrator(String),
}

impl Error {
    /// True when the error stems from the inputs rather than the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidProblem(_)
                | Error::InvalidGrid(_)
                | Error::Dimension { .. }
                | Error::InsufficientBasis(_)
                | Error::InvalidDesign(_)
                | Error::Domain(_)
                | Error::InvalidDelay(_)
                | Error::StepSize(_)
                | Error::Config(_)
        )
    }
}
