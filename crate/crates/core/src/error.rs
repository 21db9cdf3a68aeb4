use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown genre {0:?}")]
    UnknownGenre(String),

    #[error("empty genre list")]
    EmptyGenreList,

    #[error("genre vector has no set entries")]
    EmptyGenreSupport,

    #[error("invalid genre vector: {0}")]
    InvalidVector(String),

    #[error("invalid genre matrix: {0}")]
    InvalidMatrix(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("rating {rating} out of range [0.5, 5.0] at line {line}")]
    RatingOutOfRange { line: u64, rating: f64 },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("k = {k} exceeds the number of users ({users})")]
    TooFewUsers { k: usize, users: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("length mismatch: {left} predictions vs {right} targets")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed report: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
