use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient samples: needed {needed}, available {available}")]
    InsufficientSamples { needed: usize, available: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("training diverged at epoch {epoch}, step {step}")]
    TrainingDiverged { epoch: usize, step: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
