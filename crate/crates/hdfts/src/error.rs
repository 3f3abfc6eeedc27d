//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed input row, with source location.
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: u64,
        msg: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An estimator that requires a fully valid panel was given masked cells.
    #[error("masked cells present: {0}")]
    MaskedInput(String),

    #[error("not enough valid points: need at least {needed}, found {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// All scale-curve values vanish while some residual does not, so no
    /// finite scaling factor can be calibrated.
    #[error("degenerate scale: nonzero residuals where the scale curve vanishes everywhere")]
    DegenerateScale,

    #[error("horizon {horizon} exceeds the validation window of {window} years")]
    HorizonExceedsValidation { horizon: usize, window: usize },

    #[error("unknown group label: {0}")]
    UnknownGroup(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}
