use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarqError {
    #[error("transition matrix is not stochastic: {0}")]
    NonStochastic(String),

    #[error("chain is not irreducible")]
    NonIrreducible,

    #[error("no convergence after {terms} terms (last increment {residual:e})")]
    NoConvergence { terms: usize, residual: f64 },

    #[error("orbit point {point} lies on pole {pole}")]
    PoleOnOrbit { point: C64, pole: C64 },

    #[error("linear system is singular (condition number {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("root finding failed: {0}")]
    RootFindingFailure(String),

    #[error("zero {root} lies on the imaginary axis")]
    AmbiguousRoot { root: C64 },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("variance vanishes")]
    DegenerateVariance,

    #[error("sampling not supported: {0}")]
    UnsupportedSampling(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid specification: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, MarqError>;
