use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Nyquist violation: {0}")]
    NyquistViolation(String),

    #[error("malformed signal file: {0}")]
    FileFormat(String),

    #[error("expected a {expected} field, got a {found} field")]
    DomainMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("Gaussian window overruns the sampled domain: {0}")]
    WindowOverrun(String),

    #[error("insufficient phase-space coverage: {0}")]
    InsufficientCoverage(String),

    #[error("reports use different angular binnings ({0} vs {1} bins)")]
    BinningMismatch(usize, usize),

    #[error("flow is undefined at the origin of phase space")]
    ZeroPoint,

    #[error("trajectory approached the origin at t = {0}")]
    ZeroCrossing(f64),

    #[error("t = {0} is a focal time of the harmonic oscillator")]
    SingularTime(f64),

    #[error("L2 norm blew up at t = {time}: {norm} vs initial {initial}")]
    BlowUp { time: f64, norm: f64, initial: f64 },

    #[error("dyadic level {level} is outside the resolvable band (max level {max})")]
    LevelOutOfBand { level: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("finite-difference stencil does not fit: {0}")]
    StencilOverrun(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
