use alloc::string::String;

/// Errors produced by the quantization core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u32, num_classes: u32 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("pyramid level {level} exceeds grid {height}x{width}")]
    PyramidLevelExceedsGrid {
        level: usize,
        height: usize,
        width: usize,
    },
    #[error("need at least {needed} distinct descriptors, got {got}")]
    TooFewDescriptors { needed: usize, got: usize },
    #[error("normalization flags do not match")]
    FlagMismatch,
    #[error("vector is already power/L2 normalized")]
    AlreadyNormalized,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("target dimension {k} out of range (max {max})")]
    DimensionOutOfRange { k: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
