use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("spectral derivatives require a torus lattice")]
    SpectralOnAnnulus,
    #[error("field shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("point is off the target manifold (distance {distance:e} at site {site})")]
    OffManifold { site: usize, distance: f64 },
    #[error("projection undefined at site {site}: {reason}")]
    ProjectionDomain { site: usize, reason: String },
    #[error("Ω-mode has no energy primitive")]
    NoPrimitive,
    #[error("magnetic primitive undefined at site {site}: {reason}")]
    PrimitiveDomain { site: usize, reason: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("eigen-iteration did not converge after {iterations} iterations (max residual {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },
    #[error("flow step size underflow (dt = {dt:e})")]
    StepUnderflow { dt: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
