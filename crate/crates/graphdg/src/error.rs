use std::path::{Path, PathBuf};

use graphdg_core::boltzmann::BoltzmannError;
use graphdg_core::cvae::CvaeError;
use graphdg_core::edg::EdgError;
use graphdg_core::evalmmd::MmdError;
use graphdg_core::molgraph::MolGraphError;
use graphdg_core::nnet::NnError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Graph(#[from] MolGraphError),
    #[error(transparent)]
    Model(#[from] CvaeError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Geometry(#[from] EdgError),
    #[error(transparent)]
    Mmd(#[from] MmdError),
    #[error(transparent)]
    Energy(#[from] BoltzmannError),
    #[error("{0}")]
    Domain(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn config(path: &Path, message: impl Into<String>) -> Self {
        Error::Config { path: path.to_path_buf(), message: message.into() }
    }

    /// Process exit code: 2 for usage and IO problems, 1 for failures of the
    /// computation itself.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::Config { .. } | Error::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
