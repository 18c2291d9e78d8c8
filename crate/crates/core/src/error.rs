use thiserror::Error;

use crate::types::GlobalId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box (cx={cx}, cy={cy}, w={w}, h={h})")]
    InvalidBox { cx: f64, cy: f64, w: f64, h: f64 },

    #[error("embedding must be non-empty and finite")]
    InvalidEmbedding,

    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("quality history is empty")]
    EmptyHistory,

    #[error("track lifecycle violation: {0}")]
    Lifecycle(String),

    #[error("gallery id {0} has been retired")]
    RetiredId(GlobalId),

    #[error("pixel ({u}, {v}) does not intersect the ground plane")]
    NoGroundIntersection { u: f64, v: f64 },

    #[error("keypoint category missing on one side")]
    MissingKeypointCategory,

    #[error("no gallery candidate")]
    NoCandidate,

    #[error("config error: {0}")]
    Config(#[from] toml::de::Error),

    #[error("sequence mismatch: {0}")]
    SequenceMismatch(String),

    #[error("{path}:{line}: {source}")]
    Record {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
