use thiserror::Error;

/// Errors produced by the scheduling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("invalid model definition: {0}")]
    InvalidModel(String),

    #[error("incomplete profile: task {task} has no time for size {size}")]
    IncompleteProfile { task: String, size: u32 },

    #[error("invalid time: task {task} has non-positive time {value} for size {size}")]
    InvalidTime { task: String, size: u32, value: f64 },

    #[error(
        "non-monotone profile: task {task} time increases {pct:.2}% from size {from} to {to}"
    )]
    NonMonotoneProfile {
        task: String,
        from: u32,
        to: u32,
        pct: f64,
    },

    #[error("unschedulable size: no instance hosts {0} slices")]
    UnschedulableSize(u32),

    #[error("empty workload")]
    EmptyWorkload,

    #[error("model mismatch: {left} vs {right}")]
    ModelMismatch { left: String, right: String },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("instance too large for oracle: {n} tasks exceeds cap {cap}")]
    InstanceTooLarge { n: usize, cap: usize },

    #[error("unknown grid: {0}")]
    UnknownGrid(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
