use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid degradation parameters: {0}")]
    InvalidParams(String),
    #[error("a charge volume would become negative")]
    StateUnderflow,
    #[error("load profile is empty")]
    EmptyLoad,
    #[error("invalid load profile: {0}")]
    InvalidLoad(String),
    #[error("trajectory has {0} state(s); at least 2 are required")]
    TrajectoryTooShort(usize),
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("simulation failed for trajectory seed {seed}: {source}")]
    SimulationFailed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("checkpoint holds a {found} but {expected} was required")]
    KindMismatch { expected: String, found: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigInvalid(_) | Error::InvalidParams(_) => 2,
            Error::KindMismatch { .. } | Error::DimensionMismatch { .. } => 4,
            _ => 3,
        }
    }
}
