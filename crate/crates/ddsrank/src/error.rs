use std::io;
use std::path::PathBuf;

use ddsrank_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    /// Reading a dataset failed.
    #[error("{}: {source}", path.display())]
    Dataset { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("missing model files: {}", .0.join(", "))]
    MissingModels(Vec<String>),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const DIVERGENCE: u8 = 4;
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Core(CoreError::Config(_)) => exit::CONFIG,
            Error::Dataset { .. }
            | Error::Parse { .. }
            | Error::MissingModels(_)
            | Error::Core(CoreError::Data(_) | CoreError::DomainOutOfRange { .. } | CoreError::Codec(_)) => exit::DATA,
            Error::Core(CoreError::Divergence { .. }) => exit::DIVERGENCE,
            _ => exit::OTHER,
        }
    }
}
