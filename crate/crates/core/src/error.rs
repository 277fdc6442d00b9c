use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Contract(String),

    #[error("separation violated at node {node}: value {value} leaves [-1+{eps:e}, 1-{eps:e}]")]
    Separation { node: usize, value: f64, eps: f64 },

    #[error("Newton iteration failed in step {step} after {iterations} iterations, residual {residual:e}")]
    Newton {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("linear solve failed ({reason}), residual {residual:e}")]
    LinearSolve { reason: String, residual: f64 },

    #[error("terminal compatibility fails: trace of bulk terminal data differs from boundary terminal data by {mismatch:e}")]
    Compatibility { mismatch: f64 },

    #[error("control is not admissible: {0}")]
    Admissibility(String),

    #[error("ratio undefined: {0}")]
    UndefinedRatio(&'static str),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures raised by a numerical solve rather than by bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Separation { .. }
                | Error::Newton { .. }
                | Error::LinearSolve { .. }
                | Error::Compatibility { .. }
        )
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Contract(msg()))
    }
}
