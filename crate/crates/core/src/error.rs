//! Error type shared by the core pipeline stages.

use alloc::string::String;

/// Errors produced by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// Sampling frequency cannot be estimated (fewer than two samples, or
    /// zero total duration).
    #[error("sampling frequency undefined: {0}")]
    SamplingUndefined(String),
    /// A series or feature matrix violates a structural invariant.
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    /// Screen dimensions are unusable for touch normalization.
    #[error("invalid device metadata: {0}")]
    InvalidDevice(String),
    /// A keystroke code falls outside [0, 255].
    #[error("invalid keycode {0}: must be in [0, 255]")]
    InvalidKeycode(f64),
    /// Window extraction was asked to operate on an empty sequence.
    #[error("empty sequence: {0}")]
    EmptySequence(String),
    /// Tensor dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A window's channel count does not match the model input width.
    #[error("channel mismatch: window has {window} channels, model expects {model}")]
    ChannelMismatch { window: usize, model: usize },
    /// A forward pass produced a non-finite embedding.
    #[error("non-finite embedding produced by {0}")]
    NonFiniteEmbedding(String),
    /// Not enough subjects for the requested operation.
    #[error("insufficient subjects: {0}")]
    InsufficientSubjects(String),
    /// No usable data for an enrollment or scoring step.
    #[error("no usable data: {0}")]
    NoUsableData(String),
    /// Empty score list passed to a metric.
    #[error("empty score list: {0}")]
    EmptyScores(String),
    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// Training diverged (loss became non-finite).
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    TrainingDiverged { epoch: usize, batch: usize },
}
