use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the task-space pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("referential integrity violated: {0}")]
    Integrity(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("block {0} mixes tag and question nodes")]
    MixedLayerBlock(u32),
    #[error("too many nodes for exhaustive enumeration: {nodes} > {limit}")]
    TooManyNodes { nodes: usize, limit: usize },
    #[error("zero total weight in tag projection")]
    ZeroWeight,
    #[error("isolated task {0}: relatedness row sums to zero")]
    IsolatedTask(u32),
    #[error("unmatched user: no respondent shares a tag")]
    UnmatchedUser,
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("design matrix is rank deficient; collinear columns: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown language `{0}`")]
    UnknownLanguage(String),
    #[error("clock inconsistency: answer {answer_id} precedes its question by {seconds}s")]
    ClockInconsistency { answer_id: u64, seconds: i64 },
    #[error("provenance check failed: {0}")]
    Provenance(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing upstream artifact from stage `{stage}`: {path}")]
    MissingArtifact { stage: String, path: PathBuf },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.to_string(),
        }
    }
}
