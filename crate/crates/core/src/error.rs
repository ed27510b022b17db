use std::io;

use thiserror::Error;

/// Errors produced by the codec, its containers and the training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what}: expected {expected} groups, got {actual}")]
    GroupCount {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("symbol {symbol} outside table support [{min}, {max}]")]
    SymbolRange { symbol: i32, min: i32, max: i32 },

    #[error("empty symbol support")]
    EmptySupport,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("truncated stream: {0}")]
    Truncated(&'static str),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: Vec<u8>, found: Vec<u8> },

    #[error("unsupported version {0}")]
    Version(u8),

    #[error("malformed stream: {0}")]
    Malformed(String),

    #[error("model hash mismatch: stream expects {expected:016x}, model is {actual:016x}")]
    ModelHash { expected: u64, actual: u64 },

    #[error("enhancement layer missing from stream")]
    LayerMissing,

    #[error("mask error: {0}")]
    Mask(String),

    #[error("missing mask for {0}")]
    MissingMask(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
