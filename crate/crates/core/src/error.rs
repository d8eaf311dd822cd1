use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation requires a nonzero tensor")]
    ZeroTensor,

    #[error("{what} needs {size} entries, above the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("{solver} did not converge within {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite loss at iteration {iter}")]
    NonFinite { iter: usize },

    #[error("point is not a first-order point: gradient norm {grad_norm:e} exceeds {tol:e}")]
    NotCritical { grad_norm: f64, tol: f64 },

    #[error("point is not a second-order point: minimum eigenvalue {min_eig:e}")]
    NotSecondOrder { min_eig: f64 },

    #[error("point reproduces the ground truth; distance to M* is zero")]
    ZeroDistance,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn ensure_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
