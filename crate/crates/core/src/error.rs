//! Crate error type.

use alloc::string::String;
use thiserror::Error;

/// Errors reported by the core algorithms.
///
/// Conditions that are expected during normal operation (a point behind the
/// camera, an uncovered texel, a degenerate face frame) are reported through
/// flags on the result values instead; only contract violations surface here.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("face index {0} out of range (mesh has {1} faces)")]
    FaceOutOfRange(usize, usize),
    #[error("mesh has zero total surface area")]
    ZeroAreaMesh,
    #[error("invalid rig: {0}")]
    InvalidRig(String),
    #[error("basis length mismatch: expected {expected} coefficients, got {got}")]
    BasisLengthMismatch { expected: usize, got: usize },
    #[error("degenerate point configuration: {0}")]
    DegeneratePoints(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("keypoint label {0:?} does not resolve to a joint or vertex")]
    UnresolvedLabel(String),
    #[error("empty face patch set")]
    EmptyFaceSet,
    #[error("non-positive scale component")]
    NonPositiveScale,
    #[error("optimization diverged at step {step}: loss {loss} exceeds 10x initial {initial} for 50 consecutive steps")]
    Diverged { step: usize, loss: f64, initial: f64 },
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },
    #[error("missing factor {0:?} in vocabulary")]
    MissingFactor(String),
    #[error("duplicate item {item:?} in factor {factor:?}")]
    DuplicateItem { factor: String, item: String },
}

impl Error {
    pub(crate) fn invalid_mesh(msg: impl Into<String>) -> Self {
        Error::InvalidMesh(msg.into())
    }

    pub(crate) fn invalid_arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
