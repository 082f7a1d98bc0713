use crate::coercivity::InfeasibilityReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A coercivity constraint (or a chain of them) cannot be met.
    #[error("infeasible parameters: {0}")]
    Infeasible(Box<InfeasibilityReport>),

    #[error("singular or ill-conditioned system (condition estimate {condition_estimate:e})")]
    Singular { condition_estimate: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
