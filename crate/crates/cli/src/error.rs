use nrdf::NrdfError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("solver failed: {0}")]
    Solver(NrdfError),

    #[error("config hash mismatch: config {config}, oracle {oracle}")]
    HashMismatch { config: String, oracle: String },

    #[error("oracle result is missing rows for D = {0:?}")]
    MissingRows(Vec<f64>),

    #[error("cross-check failed: {0}")]
    CrosscheckFailed(String),
}

impl CliError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation { field: field.into(), reason: reason.into() }
    }

    /// Process exit code: 2 validation, 3 solver failure, 4 cross-check failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse(_) | CliError::Validation { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::HashMismatch { .. } | CliError::MissingRows(_) | CliError::CrosscheckFailed(_) => 4,
        }
    }
}

impl From<NrdfError> for CliError {
    /// Model and budget problems are the user's input; everything else is the solver's.
    fn from(e: NrdfError) -> Self {
        match e {
            NrdfError::InvalidModel { field, reason } => CliError::Validation { field: format!("model.{field}"), reason },
            NrdfError::DimensionMismatch { what, expected, found } => CliError::Validation {
                field: format!("model.{what}"),
                reason: format!("expected shape {expected:?}, found {found:?}"),
            },
            NrdfError::BudgetInfeasible { budget, d_min } => {
                CliError::validation("D", format!("D = {budget} must exceed d_min = {d_min}"))
            }
            NrdfError::NotDetectable | NrdfError::NotStabilizable => CliError::validation("model", e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
