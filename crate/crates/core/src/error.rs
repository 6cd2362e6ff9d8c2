use thiserror::Error;

/// Errors produced by the state-space GP machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix has non-finite or malformed entries: {0}")]
    InvalidMatrix(String),

    #[error("drift matrix is not Hurwitz (max eigenvalue real part {max_real_part:e})")]
    NotHurwitz { max_real_part: f64 },

    #[error("matrix is singular or not positive definite: {0}")]
    SingularMatrix(String),

    #[error("innovation covariance could not be factorized at step {step}")]
    SingularInnovation { step: usize },

    #[error("invalid time step {0}; time steps must be strictly positive")]
    InvalidTimeStep(f64),

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("degenerate spatial grid: locations {0} and {1} coincide")]
    DegenerateGrid(usize, usize),

    #[error("invalid shrinkage value {0}; must be strictly positive")]
    InvalidShrinkage(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("covariance lost positive semi-definiteness (min eigenvalue {min_eig:e}, trace {trace:e})")]
    NotPsd { min_eig: f64, trace: f64 },

    #[error("objective is not finite at the initial parameters")]
    InvalidStart,

    #[error("optimization aborted after {iterations} iterations: {reason}")]
    OptimizationAborted {
        iterations: usize,
        reason: String,
        /// Objective values accepted before the abort.
        partial_trace: Vec<f64>,
        /// Best log-parameters seen before the abort.
        best_log_theta: Vec<f64>,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate observation at t={t} (line {line})")]
    DuplicatePoint { t: f64, line: u64 },

    #[error("spatial grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures that come from the numerics rather than from user input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InvalidMatrix(_)
                | Error::NotHurwitz { .. }
                | Error::SingularMatrix(_)
                | Error::SingularInnovation { .. }
                | Error::NotPsd { .. }
                | Error::InvalidStart
                | Error::OptimizationAborted { .. }
        )
    }
}
