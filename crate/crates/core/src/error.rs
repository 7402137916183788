use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal too short: {len} samples, one frame needs {frame}")]
    SignalTooShort { len: usize, frame: usize },
    #[error("no features remain after pruning")]
    NoFeaturesRemain,
    #[error("phase required for reconstruction")]
    PhaseRequired,
    #[error("degenerate atom: zero-norm vector")]
    DegenerateAtom,
    #[error("too few features: need {needed}, have {available}")]
    TooFewFeatures { needed: usize, available: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("corrupt bank file: {0}")]
    CorruptBank(String),
    #[error("unsupported bank format version {found} (expected {expected})")]
    BankVersion { found: u32, expected: u32 },
    #[error("degenerate target: all-zero spectrum")]
    DegenerateTarget,
    #[error("numerical failure at iteration {iteration}")]
    NumericalFailure { iteration: usize },
    #[error("empty segment")]
    EmptySegment,
    #[error("no usable frames for speaker identification")]
    NoUsableFrames,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("insufficient sources: {0}")]
    InsufficientSources(String),
    #[error("zero-energy {0}")]
    ZeroEnergy(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing path: {}", .0.display())]
    MissingPath(PathBuf),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalFailure { .. } | Error::DegenerateTarget => 3,
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
