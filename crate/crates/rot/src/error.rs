use thiserror::Error;

/// Error conditions surfaced by the library.
#[derive(Debug, Error)]
pub enum RotError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Outer dual iteration hit its iteration cap before the residual
    /// dropped below tolerance.
    #[error("dual solver did not converge after {iters} iterations: residual {residual:.3e} > tol {tol:.3e}")]
    NonConvergence {
        iters: usize,
        residual: f64,
        tol: f64,
        trace: Vec<f64>,
    },

    /// Per-row scalar Newton/bisection failed; carries the last bracket.
    #[error("scalar root solve did not converge in {iters} iterations, last bracket [{lo:.6e}, {hi:.6e}]")]
    RootNonConvergence { iters: usize, lo: f64, hi: f64 },

    #[error("degenerate section at index {index}: {reason}")]
    DegenerateSection { index: usize, reason: String },

    #[error("epsilon outside the cut-locus-free regime: {0}")]
    OutOfRegime(String),

    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RotError>;
