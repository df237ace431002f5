use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty client set")]
    EmptyClientSet,

    #[error("no participating client")]
    NoParticipants,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iteration-spacing weights undefined at σ=0")]
    ZeroSigma,

    #[error("fixed-point solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("all dissimilarity probes skipped (global gradient vanishes at every probe)")]
    AllProbesSkipped,

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),

    #[error("unknown scenario preset `{0}`")]
    UnknownScenario(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
