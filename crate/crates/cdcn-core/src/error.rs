use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by kernel synthesis and the degradation operators.
#[derive(Debug, Error)]
pub enum DegradationError {
    #[error("kernel width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("kernel size must be an odd integer >= 3, got {0}")]
    BadKernelSize(usize),
    #[error("anisotropic axis length {0} outside [0.6, 5.0]")]
    LambdaOutOfRange(f64),
    #[error("kernel noise level {0} exceeds 0.25")]
    NoiseTooLarge(f64),
    #[error("scale factor {0} unsupported here (expected one of {1:?})")]
    UnsupportedScale(usize, &'static [usize]),
    #[error("kernel {kernel}x{kernel} does not fit image {height}x{width}")]
    KernelLargerThanImage {
        kernel: usize,
        height: usize,
        width: usize,
    },
    #[error("image {height}x{width} not divisible by scale {scale}")]
    NotDivisible {
        height: usize,
        width: usize,
        scale: usize,
    },
    #[error("malformed kernel file: {0}")]
    MalformedKernelFile(String),
}

/// Errors from model construction, forward evaluation and checkpointing.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("upsample scale {0} unsupported (expected 2, 3 or 4)")]
    UnsupportedScale(usize),
    #[error("checkpoint does not match requested config: {0}")]
    CheckpointMismatch(String),
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error("model variant has no detail output")]
    NoDetailHead,
}

/// Errors from the training loop.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("loss mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no loss terms enabled")]
    NoLossTerms,
    #[error("non-finite loss at iteration {iter} (total = {value})")]
    NonFiniteLoss { iter: u64, value: f64 },
    #[error("training pool is empty or image smaller than crop {0}px")]
    PoolTooSmall(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Degradation(#[from] DegradationError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Errors from metrics and the benchmark protocols.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("images have different shapes: {0}")]
    ShapeMismatch(String),
    #[error("expected a 3-channel image, got {0} channels")]
    WrongChannelCount(usize),
    #[error("image {height}x{width} smaller than the {window}x{window} SSIM window")]
    ImageTooSmall {
        height: usize,
        width: usize,
        window: usize,
    },
    #[error("border {border} too large for image {height}x{width}")]
    BorderTooLarge {
        border: usize,
        height: usize,
        width: usize,
    },
    #[error("dataset directory {0} contains no images")]
    EmptyDataset(PathBuf),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Degradation(#[from] DegradationError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// File-level failures, wrapped so callers see the offending path.
#[derive(Debug, Error)]
#[error("{path}: {source}")]
pub struct IoError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

impl IoError {
    pub fn new(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self {
            path: path.into(),
            source,
        }
    }
}
