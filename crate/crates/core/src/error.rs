use thiserror::Error;

use crate::operator::ParseError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("derivative order {0} exceeds the maximum of {max}", max = crate::spectral::MAX_DERIVATIVE_ORDER)]
    DerivativeOrder(u32),

    #[error("cannot normalize a field with zero L2 norm")]
    ZeroField,

    #[error("field is not normalized: norm = {0}")]
    NotNormalized(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid evolution parameters: {0}")]
    InvalidParams(String),

    #[error("index {index} out of range (allowed {min}..={max})")]
    OutOfRange { index: u32, min: u32, max: u32 },

    #[error("slot {0} is not alive")]
    DeadSlot(u32),

    #[error("overlapping slot ranges")]
    OverlappingSlots,

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("dense kernel would hold {0} entries, above the 2^24 limit")]
    TooLarge(u128),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
