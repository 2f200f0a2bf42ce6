use thiserror::Error;

/// Errors shared across the simulator, tracker, percept, skill, and learning
/// layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("wrench exceeds saturation limit: |{value}| > {limit}")]
    SaturationExceeded { value: f64, limit: f64 },

    #[error("command contains non-finite components")]
    NonFiniteCommand,

    #[error("displacement field is empty (no markers tracked)")]
    EmptyField,

    #[error("need at least {need} fresh markers, got {got}")]
    TooFewMarkers { need: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("system is singular; use lambda > 0 (duplicate inputs at lambda = 0)")]
    SingularSystem,

    #[error("training set must contain at least two classes")]
    SingleClass,

    #[error("training loss became non-finite at epoch {epoch} (lr too high or bad inputs)")]
    NonFiniteLoss { epoch: usize },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("no object silhouette ever seen: nothing_to_scan")]
    NothingToScan,

    #[error("gripper closed fully without contact: no_object")]
    NoObject,

    #[error("load profile has no unique maximum")]
    NoUniqueMaximum,

    #[error("unknown {kind} name: {name}")]
    UnknownName { kind: &'static str, name: String },

    #[error("episode exceeded {max_frames} frames without meeting its stop condition")]
    Timeout { max_frames: usize },
}

pub type Result<T> = std::result::Result<T, CoreError>;
