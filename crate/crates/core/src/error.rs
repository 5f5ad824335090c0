use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("audio format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("empty audio: {0}")]
    EmptyAudio(String),

    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("network spec error: {0}")]
    Spec(String),

    #[error("batch too small for training-mode batch norm ({0} rows)")]
    BatchTooSmall(usize),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("missing class: {0}")]
    MissingClass(String),

    #[error("manifest error at line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("missing feature set {set} for track {track}")]
    MissingFeatures { set: String, track: String },

    #[error("cache error: {0}")]
    Cache(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Environment(String),

    #[error("codec error: {msg}\n{output}")]
    Codec { msg: String, output: String },

    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
