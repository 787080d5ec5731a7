use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid needs {needed} points, cap is {cap}")]
    GridTooLarge { needed: usize, cap: usize },

    #[error("grid mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("x = {x} lies outside the grid [{x_min}, {x_max}]")]
    OutsideGrid { x: f64, x_min: f64, x_max: f64 },

    #[error("inverse iteration did not converge for band {band}")]
    NonConvergence { band: usize },

    #[error("fiber solve failed at band {band}, k = {k}: {source}")]
    Fiber {
        band: usize,
        k: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("ambiguous inversion of band {band}: {crossings} crossings of {edge} on the negative half-line")]
    AmbiguousInversion {
        band: usize,
        edge: f64,
        crossings: usize,
    },

    #[error("operation requires a {expected} potential")]
    WrongPotential { expected: &'static str },

    #[error("every inverse image is empty")]
    EmptyPacket,

    #[error("packet support does not match the sampled curve for band {band}")]
    SupportMismatch { band: usize },

    #[error("no spectrum entry for (m = {m}, p = {p})")]
    MissingEntry { m: usize, p: i64 },

    #[error("mode index passed the cap {cap} without leaving the window")]
    ModeCap { cap: i64 },

    #[error("matrix dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("projection kept only {retained:.3} of the packet norm")]
    ProjectionLoss { retained: f64 },

    #[error("estimate violated: {0}")]
    LemmaViolated(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
