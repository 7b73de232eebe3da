use thiserror::Error;

/// Errors produced by the tomography library.
#[derive(Debug, Error)]
pub enum OhtError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Hermite order {n} exceeds the supported bound {max}")]
    HermiteOrder { n: usize, max: usize },

    #[error("truncated trace {trace:.3e} short of 1 at dimension {dim} (limit {limit})")]
    TruncationLeak { trace: f64, dim: usize, limit: usize },

    #[error("state purity {purity:.4} below the pure-state gate {gate}")]
    Purity { purity: f64, gate: f64 },

    #[error("reference column q'={q_ref} has vanishing density {value:.3e}; pick another reference point")]
    ReferencePoint { q_ref: f64, value: f64 },

    #[error("{d} distinct phases over [0,π) cannot resolve n_max={n_max}; at least n_max+1 = {} are needed", n_max + 1)]
    Aliasing { d: usize, n_max: usize },

    #[error("phases are not on an equally spaced grid: {0}")]
    NonUniformPhases(String),

    #[error("empty phase bins: {0:?}")]
    EmptyPhaseBins(Vec<usize>),

    #[error("Gram matrix of band {band} has condition number {cond:.3e} (> {limit:.0e}); use a smaller dimension or another L")]
    GramConditioning { band: usize, cond: f64, limit: f64 },

    #[error("unsupported state: {0}")]
    UnsupportedState(String),

    #[error("phase coverage insufficient: {0}")]
    PhaseCoverage(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OhtError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(OhtError::InvalidInput(msg.into()))
}
