use thiserror::Error;

/// Errors raised by the library layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("pattern must not be empty")]
    EmptyPattern,

    #[error("invalid bit value {0} (expected 0 or 1)")]
    InvalidBit(u8),

    #[error("invalid spin value {0} (expected -1 or +1)")]
    InvalidSpin(i8),

    #[error("invalid bit string {0:?}")]
    InvalidBitString(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("{name} = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("no distinct pattern found after {tries} tries")]
    RejectionExhausted { tries: usize },

    #[error("invalid pattern library: {0}")]
    InvalidLibrary(String),

    #[error("unsupported library version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("unknown geometry preset {0:?}")]
    UnknownPreset(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid particle: {0}")]
    InvalidParticle(String),

    #[error("bipartite weights need at least one key bit")]
    NoKeyBits,

    #[error("rescaling needs a positive weight (max entry {0})")]
    NonPositiveWeights(f64),

    #[error("exact enumeration of {n} spins exceeds the cap of {cap}; use the annealing solver")]
    TooManySpins { n: usize, cap: usize },

    #[error("ground manifold holds more than {0} states")]
    GroundManifoldTooLarge(usize),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("empty sample set")]
    NoSamples,

    #[error("key statistic requested without a key index")]
    MissingKeyIndex,

    #[error("classifier/encoding mismatch: {0}")]
    ModeMismatch(String),

    #[error("invalid Hough input: {0}")]
    InvalidHough(String),

    #[error("peak ({phi}, {rho}) lies outside the bank grid")]
    PeakOutsideGrid { phi: f64, rho: f64 },

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
