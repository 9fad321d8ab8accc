use thiserror::Error;

/// Errors produced across the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigenvalues must be sorted ascending (violation at index {0})")]
    NotSorted(usize),

    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("decomposition is not reliable: {0}")]
    Unreliable(String),

    #[error("eigensolver failed: {diagnostics}")]
    SolverFailure { diagnostics: String },

    #[error("eigendecomposition failed for posterior sample {sample}, data point {point}: {reason}")]
    SampleFailure {
        sample: usize,
        point: usize,
        reason: String,
    },

    #[error("training aborted at epoch {epoch}: {reason}")]
    TrainingAborted {
        epoch: usize,
        reason: String,
        trace: Box<crate::variational::TrainingTrace>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverFailure { .. }
                | Error::SampleFailure { .. }
                | Error::TrainingAborted { .. }
                | Error::Unreliable(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
