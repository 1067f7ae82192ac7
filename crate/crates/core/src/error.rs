use thiserror::Error;

/// Errors raised by the solvers in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NrdfError {
    #[error("dimension mismatch in {what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid model field `{field}`: {reason}")]
    InvalidModel { field: String, reason: String },

    #[error("innovation covariance is not invertible at stage {stage}")]
    SingularInnovation { stage: usize },

    #[error("pair (A, C) is not detectable")]
    NotDetectable,

    #[error("pair (A, Sigma_w^(1/2)) is not stabilizable")]
    NotStabilizable,

    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("distortion budget {budget} does not exceed the minimum distortion {d_min}")]
    BudgetInfeasible { budget: f64, d_min: f64 },

    #[error("could not bracket the Lagrange multiplier (theta_max reached {theta_max:e})")]
    BracketFailure { theta_max: f64 },

    #[error("stage {stage}: distortion {d} does not exceed the stage minimum {d_min}")]
    InfeasibleStage { stage: usize, d: f64, d_min: f64 },

    #[error("(A, Sigma_bar) has none of the commuting structures; use the SDP oracle for this instance")]
    StructureNotSatisfied,

    #[error("state matrix A is singular")]
    SingularA,

    #[error("posterior covariance is singular")]
    SingularPosterior,

    #[error("test-channel scalings are not PSD at stage {stage}")]
    ScalingNotPsd { stage: usize },

    #[error("matrix has numerical rank zero")]
    ZeroMatrix,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, NrdfError>;
