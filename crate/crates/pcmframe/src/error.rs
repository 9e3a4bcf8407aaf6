use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vector norm is zero or below 1e-12")]
    ZeroVector,
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid dimension {0}")]
    InvalidDimension(usize),
    #[error("empty embedding set")]
    EmptySet,
    #[error("prompt set mean vanishes (norm {0:e})")]
    DegeneratePromptSet(f64),
    #[error("projected embedding vanishes")]
    DegenerateProjection,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch normalization needs at least 2 samples in train mode, got {0}")]
    BatchTooSmall(usize),
    #[error("activations do not belong to this network")]
    StaleActivations,
    #[error("step {step} outside schedule range [0, {total}]")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset fingerprint {dataset:016x} does not match world {world:016x}")]
    FingerprintMismatch { dataset: u64, world: u64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("unknown config key `{key}` on line {line}")]
    UnknownKey { key: String, line: usize },
    #[error("type error on line {line}: {message}")]
    TypeError { line: usize, message: String },
    #[error("value out of range for `{key}`: {message}")]
    RangeError { key: String, message: String },
    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("file truncated")]
    TruncatedFile,
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable tag used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroVector => "ZeroVector",
            Error::NonFinite => "NonFinite",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidDimension(_) => "InvalidDimension",
            Error::EmptySet => "EmptySet",
            Error::DegeneratePromptSet(_) => "DegeneratePromptSet",
            Error::DegenerateProjection => "DegenerateProjection",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::BatchTooSmall(_) => "BatchTooSmall",
            Error::StaleActivations => "StaleActivations",
            Error::StepOutOfRange { .. } => "StepOutOfRange",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::FingerprintMismatch { .. } => "FingerprintMismatch",
            Error::InsufficientData(_) => "InsufficientData",
            Error::EmptyHoldout => "EmptyHoldout",
            Error::UnknownKey { .. } => "UnknownKey",
            Error::TypeError { .. } => "TypeError",
            Error::RangeError { .. } => "RangeError",
            Error::BadMagic { .. } => "BadMagic",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::TruncatedFile => "TruncatedFile",
            Error::Malformed(_) => "Malformed",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
