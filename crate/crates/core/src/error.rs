use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("timestamp decreases at index {index}: {previous} then {current}")]
    NonMonotonicTimestamp {
        index: usize,
        previous: u32,
        current: u32,
    },

    #[error("label {label} at index {index} is out of range for {class_count} classes")]
    LabelOutOfRange {
        index: usize,
        label: u16,
        class_count: usize,
    },

    #[error("non-finite coordinate at index {0}")]
    NonFiniteCoordinate(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("no camera position satisfies the placement constraints")]
    NoCameraCandidates,

    #[error("last cut {last_cut} is below the maximum timestamp {max_timestamp}; {dropped} points would be dropped")]
    CutsTooShort {
        last_cut: u32,
        max_timestamp: u32,
        dropped: usize,
    },

    #[error("reference point set is empty")]
    EmptyReference,

    #[error("scale mismatch: expected scale {expected}, got {actual}")]
    ScaleMismatch { expected: usize, actual: usize },

    #[error("refinement level mismatch for scale {scale}: expected {expected}, got {actual}")]
    LevelMismatch {
        scale: usize,
        expected: usize,
        actual: usize,
    },

    #[error("missing prediction for scale {0}")]
    MissingScale(usize),

    #[error("cardinality mismatch for scale {scale}: {expected} points expected, {actual} given")]
    CardinalityMismatch {
        scale: usize,
        expected: usize,
        actual: usize,
    },

    #[error("cannot evaluate an empty output")]
    EmptyOutput,

    #[error("timeline is incomplete: {0}")]
    IncompleteTimeline(String),

    #[error("pipeline worker failed: {0}")]
    Worker(String),
}
