use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alphabet size must be at least 2, got {0}")]
    AlphabetTooSmall(usize),
    #[error("alphabet mismatch: expected size {expected}, got {actual}")]
    AlphabetMismatch { expected: usize, actual: usize },
    #[error("symbol {symbol} is outside an alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("value {value} is outside the admissible range {range}")]
    OutOfRange { value: f64, range: &'static str },
    #[error("invalid rational {0:?}")]
    InvalidRational(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("string of length {len} is too short for order {order}")]
    TooShort { len: usize, order: usize },
    #[error("context tables would exceed the cap of {cap} entries")]
    CapacityExceeded { cap: usize },
    #[error("full-mode model is limited to {limit} symbols")]
    FullModeLimit { limit: usize },
    #[error("operation requires {0}")]
    Unsupported(&'static str),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("unknown source id {0:?}")]
    UnknownSource(String),
    #[error("zoo file: {0}")]
    Zoo(String),
    #[error("burst length search exceeded cap of {0} steps")]
    BurstCap(u64),
    #[error("corrupt header: {0}")]
    CorruptHeader(&'static str),
    #[error("unsupported format version {found}, expected {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("truncated payload: needed byte {needed} of {available}")]
    Truncated { needed: usize, available: usize },
    #[error("corrupt payload: {0}")]
    CorruptPayload(&'static str),
}
