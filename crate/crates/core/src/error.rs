use crate::sysdsl::ParseError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unbound symbol '{0}'")]
    Unbound(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular metric at {0:?}")]
    SingularMetric(Vec<f64>),
    #[error("degenerate form: {0}")]
    Degenerate(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Hessian: {0}")]
    SingularHessian(String),
    #[error("phase point is off shell (deviation {deviation:e}, tolerance {tolerance:e})")]
    OffShell { deviation: f64, tolerance: f64 },
    #[error("density weight mismatch: expected {expected}, found {found}")]
    WeightMismatch { expected: String, found: String },
    #[error("lagrangian is not of natural form: {0}")]
    NonNaturalLagrangian(String),
    #[error("propagation unstable: column norm drift {0:e}")]
    Unstable(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable machine-readable name used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::Domain(_) => "DomainError",
            Error::Unbound(_) => "UnboundSymbol",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::SingularMetric(_) => "SingularMetric",
            Error::Degenerate(_) => "Degenerate",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SingularHessian(_) => "SingularHessian",
            Error::OffShell { .. } => "OffShell",
            Error::WeightMismatch { .. } => "WeightMismatch",
            Error::NonNaturalLagrangian(_) => "NonNaturalLagrangian",
            Error::Unstable(_) => "Unstable",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::SingularHessian(_) | Error::Unstable(_)
        )
    }
}
