use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("cannot enumerate {n_sites} sites (limit is {limit})")]
    EnumerationTooLarge { n_sites: usize, limit: usize },

    #[error("site index {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("size mismatch: expected {expected}, got {got} ({what})")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("sample {index} has zero amplitude")]
    ZeroAmplitudeInBatch { index: usize },

    #[error("all amplitudes are zero on the requested basis")]
    DegenerateState,

    #[error("all importance weights vanish")]
    DegenerateWeights,

    #[error("sampler stalled: {0}")]
    SamplerStall(String),

    #[error("chain diagnostics require MCMC batches with at least two chains")]
    DiagnosticsNotApplicable,

    #[error("at least {required} samples are required, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error("shrinkage factor undefined for a vanishing mean")]
    Rho0Undefined,

    #[error("operation requires an enumerable (exact-mode) system: {0}")]
    OracleOnly(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
