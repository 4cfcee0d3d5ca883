use alloc::string::String;
use alloc::vec::Vec;

/// Everything that can go wrong inside the numerical core.
///
/// Variants carry enough context (sizes, offending values, residuals) for a
/// driver to echo a useful diagnostic without re-running the computation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid hypersurface: {0}")]
    InvalidHypersurface(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {worst_residual:.3e})")]
    EigenNonConvergence {
        iterations: usize,
        worst_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("spectral parameter {lambda} lies within {gap:.3e} of the spectrum")]
    NearSpectrum { lambda: f64, gap: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("ill-conditioned system (condition number {condition:.3e}): {context}")]
    IllConditioned { condition: f64, context: String },

    #[error("CFL condition violated: dt = {dt} exceeds bound {bound}")]
    Cfl { dt: f64, bound: f64 },

    #[error("dataset lacks {0}")]
    MissingData(&'static str),

    #[error("manifold mismatch: {0} vs {1}")]
    ManifoldMismatch(String, String),

    #[error("disconnected chaining graph at scale {scale}: components {components:?}")]
    Disconnected {
        scale: f64,
        components: Vec<Vec<usize>>,
    },

    #[error("ambiguous spectral assignment ({ambiguous} of {total} values): disjointness hypothesis likely violated")]
    Ambiguous { ambiguous: usize, total: usize },

    #[error("source signal: {0}")]
    Signal(String),
}

pub type Result<T> = core::result::Result<T, Error>;
