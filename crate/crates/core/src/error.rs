use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mass matrix is not invertible")]
    NonInvertibleMass,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("state matrix is unstable (max real part of eigenvalues {max_real:e})")]
    Unstable { max_real: f64 },
    #[error("degenerate modes: {0}")]
    DegenerateModes(String),
    #[error("rayleigh fit is singular (repeated frequency at the selected modes)")]
    SingularRayleighFit,
    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("stream corrupted: expected {expected} channels, got {got}")]
    StreamCorruption { expected: usize, got: usize },
    #[error("degenerate initialization: eigenvalue ratio {ratio:e}")]
    DegenerateInitialization { ratio: f64 },
    #[error("rejected non-finite sample")]
    RejectedSample,
    #[error("ill-conditioned whitening: eigenvalue {index} is {value:e}")]
    IllConditionedWhitening { index: usize, value: f64 },
    #[error("ill-conditioned mixing matrix (condition number {cond:e})")]
    IllConditionedMixing { cond: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid matrix stack: {0}")]
    InvalidStack(String),
    #[error("zero vector")]
    ZeroVector,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("incompatible runs: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
