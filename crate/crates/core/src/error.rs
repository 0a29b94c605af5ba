use alloc::string::String;

use crate::linalg::RankDecision;

/// Errors raised by the numerical and symbolic kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable `{name}` at offset {offset}")]
    UndeclaredVariable { name: String, offset: usize },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("chart mismatch")]
    ChartMismatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: &'static str },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unstable rank decision: {0}")]
    UnstableRank(RankDecision),
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("point outside the stratum (D^2)^perp \\ (D^3)^perp: {0}")]
    Stratum(String),
    #[error("characteristic kernel has dimension {0}, expected 1")]
    KernelDimension(usize),
    #[error("singular difference: {0}")]
    Singular(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    /// True for failures caused by floating point conditioning rather than by
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::UnstableRank(_)
                | Error::StepUnderflow { .. }
                | Error::KernelDimension(_)
                | Error::Singular(_)
                | Error::Numerical(_)
                | Error::Verification(_)
                | Error::Stratum(_)
                | Error::Domain { .. }
        )
    }

    /// Short module-qualified code used in reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "expr.syntax",
            Error::UndeclaredVariable { .. } => "expr.undeclared",
            Error::UnknownVariable(_) => "expr.unknown-variable",
            Error::InvalidChart(_) => "expr.chart",
            Error::ChartMismatch => "geometry.chart-mismatch",
            Error::Dimension { .. } => "geometry.dimension",
            Error::Domain { .. } => "expr.domain",
            Error::InvalidInput(_) => "input",
            Error::UnstableRank(_) => "linalg.unstable-rank",
            Error::StepUnderflow { .. } => "geometry.step-underflow",
            Error::Stratum(_) => "symplectic.stratum",
            Error::KernelDimension(_) => "symplectic.kernel",
            Error::Singular(_) => "projective.singular",
            Error::Numerical(_) => "numerical",
            Error::Verification(_) => "frames.verification",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
