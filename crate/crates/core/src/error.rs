//! Crate-wide error type with CLI exit-code classification.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {path}:{line}: {msg}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate post id {id:?}")]
    DuplicateId { id: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("embedding provider failed (batch {batch}): {msg}")]
    Provider { batch: usize, msg: String },

    #[error("chat client failed: {msg}")]
    ChatClient { msg: String },

    #[error("http request failed with status {status}: {body}")]
    HttpStatus { status: u16, body: String },

    #[error("training diverged: non-finite loss at ratio {ratio}, epoch {epoch}")]
    TrainingDiverged { ratio: String, epoch: usize },

    #[error("response parse error: {0}")]
    ParseResponse(String),

    #[error("no score found in grader output")]
    ScoreNotFound,

    #[error("coincident centroids for clusters {a} and {b}")]
    CoincidentCentroids { a: usize, b: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing or invalid artifact for stage {stage}: {msg}")]
    MissingArtifact { stage: String, msg: String },

    #[error("artifact corrupt at {path}: {msg}")]
    ArtifactCorrupt { path: PathBuf, msg: String },

    #[error("run directory locked: {path} (remove the lock file if no run is active)")]
    RunLocked { path: PathBuf },

    #[error("cluster {cluster_id} failed after {rounds_completed} completed round(s): {msg}")]
    ClusterFailed {
        cluster_id: usize,
        rounds_completed: usize,
        msg: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit-code class: 1 config, 3 external service, 2 any other failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Provider { .. } | Error::ChatClient { .. } | Error::HttpStatus { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
