use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("resolvent solve did not converge after {iterations} iterations (best residual {best_residual:e})")]
    NonConvergence { iterations: usize, best_residual: f64 },

    #[error("linearised system could not be solved: {0}")]
    IllConditioned(String),

    #[error("continuation stage {stage} failed: {source}")]
    Continuation {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time step {step} (t = {t}) failed: {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("incompatible runs: {0}")]
    Incompatible(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the failure originates in a nonlinear or linear solve.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::IllConditioned(_) => true,
            Error::Continuation { source, .. } | Error::Step { source, .. } => {
                source.is_solver_failure()
            }
            _ => false,
        }
    }
}
