use std::io;
use std::path::PathBuf;

use resid_core::chunker::ChunkError;
use resid_core::estimator::EstimateError;
use resid_core::model::ModelError;
use resid_core::records::RecordError;
use resid_core::simulator::SimError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_RECORD: i32 = 4;
pub const EXIT_UNDEFINED: i32 = 5;
pub const EXIT_STALE: i32 = 6;
pub const EXIT_LOCKED: i32 = 7;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("run {0:?} is already in the session")]
    DuplicateRun(String),
    #[error("undefined: no bug observed (m=0)")]
    UndefinedMle,
    #[error(
        "chunk database does not match the session: expected digest {expected}, found {found}"
    )]
    StaleSession { expected: String, found: String },
    #[error(
        "session {0} is locked by another process (remove the .lock file if that process is gone)"
    )]
    Locked(PathBuf),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Model(_) => EXIT_USAGE,
            CliError::Chunk(ChunkError::StaleDatabase { .. }) | CliError::StaleSession { .. } => {
                EXIT_STALE
            }
            CliError::Chunk(_) | CliError::Parse { .. } => EXIT_PARSE,
            CliError::Sim(SimError::Graph(_)) => EXIT_PARSE,
            CliError::Sim(SimError::UnknownGraph(_) | SimError::Probability { .. }) => EXIT_USAGE,
            CliError::Record(_) | CliError::MalformedRecord { .. } | CliError::DuplicateRun(_) => {
                EXIT_RECORD
            }
            CliError::UndefinedMle => EXIT_UNDEFINED,
            CliError::Locked(_) => EXIT_LOCKED,
            CliError::Sim(_) | CliError::Estimate(_) | CliError::Io { .. } | CliError::Other(_) => {
                EXIT_FAILURE
            }
        }
    }
}
