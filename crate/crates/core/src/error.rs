//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Stream;

#[derive(Debug, Error)]
pub enum CpdError {
    #[error("invalid dimensions: {reason}")]
    InvalidDims { reason: String },

    #[error("dimension product overflows: {what}")]
    DimOverflow { what: String },

    #[error("negative value {value} at flat index {index}")]
    NegativeValue { index: usize, value: f64 },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("cross-stream pairing needs maps from different streams, both are {stream}")]
    SameStreamPairing { stream: Stream },

    #[error("trajectory {trajectory}, point {point}: {reason}")]
    TrajectoryBounds {
        trajectory: usize,
        point: usize,
        reason: String,
    },

    #[error("{}: bad magic, expected {expected:?}", path.display())]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("{}: unsupported format version {version}", path.display())]
    UnsupportedVersion { path: PathBuf, version: u16 },

    #[error("{}: payload size mismatch, expected {expected} bytes, found {actual}", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{}: unknown stream tag {tag}", path.display())]
    InvalidStreamTag { path: PathBuf, tag: u8 },

    #[error("{}: expected a {expected} codebook, found {found}", path.display())]
    CodebookKind {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("requested {requested} components but the sample only supports {achievable}")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("empty input: {what}")]
    EmptyInput { what: String },

    #[error("training requires at least two distinct class labels")]
    SingleClass,

    #[error("invalid parameter: {reason}")]
    InvalidParam { reason: String },

    #[error("config: {reason}")]
    Config { reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CpdError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CpdError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable process exit code for the CLI; documented in the README.
    pub fn exit_code(&self) -> u8 {
        match self {
            CpdError::BadMagic { .. } => 10,
            CpdError::UnsupportedVersion { .. } => 11,
            CpdError::InvalidDims { .. } => 12,
            CpdError::DimOverflow { .. } => 13,
            CpdError::Truncated { .. } => 14,
            CpdError::NegativeValue { .. } => 15,
            CpdError::NonFinite { .. } => 16,
            CpdError::InvalidStreamTag { .. } => 17,
            CpdError::CodebookKind { .. } => 18,
            CpdError::Parse { .. } => 19,
            CpdError::ShapeMismatch { .. } => 20,
            CpdError::SameStreamPairing { .. } => 21,
            CpdError::TrajectoryBounds { .. } => 22,
            CpdError::EmptyInput { .. } => 23,
            CpdError::RankDeficient { .. } => 24,
            CpdError::SingleClass => 25,
            CpdError::InvalidParam { .. } => 26,
            CpdError::Config { .. } => 27,
            CpdError::Io { .. } => 30,
        }
    }
}

pub type Result<T> = std::result::Result<T, CpdError>;
