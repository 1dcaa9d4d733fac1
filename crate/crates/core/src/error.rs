use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("vector family is empty")]
    EmptyFamily,

    #[error("duplicate label {0} in vector family")]
    DuplicateLabel(usize),

    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),

    #[error("forced vectors are linearly dependent (position {0})")]
    DependentMustKeep(usize),

    #[error("invalid problem at `{path}`: {message}")]
    Problem { path: String, message: String },

    #[error("point is infeasible: residual {residual:e} exceeds tolerance {tol:e}")]
    InfeasiblePoint { residual: f64, tol: f64 },

    #[error("constraint set is empty at parameter {param:?}")]
    InfeasibleSet { param: Vec<f64> },

    #[error("solver did not converge: {0}")]
    SolverFailure(String),

    #[error("enumeration guard exceeded: {size} > {guard}")]
    GuardExceeded { size: usize, guard: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no retained samples: {0}")]
    NoSamples(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        })
    }
}

pub(crate) fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTolerance(tol))
    }
}
