use std::io;
use std::path::{Path, PathBuf};

use crate::client::ClientError;
use crate::embeddings::EmbeddingError;
use crate::manifest_io::ManifestError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const SERVICE: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Manifest {
        path: PathBuf,
        source: ManifestError,
    },
    #[error("{}: {source}", path.display())]
    Embedding {
        path: PathBuf,
        source: EmbeddingError,
    },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {reason}", path.display())]
    Spec { path: PathBuf, reason: String },
    #[error("{store} embeddings have no vector for key {key:?}")]
    MissingEmbedding { store: &'static str, key: String },
    #[error("{context}: {source}")]
    Core {
        context: String,
        source: capcurate_core::Error,
    },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => exit::USAGE,
            Error::Client(ClientError::ServiceUnavailable { .. })
            | Error::Client(ClientError::BadResponse { .. }) => exit::SERVICE,
            _ => exit::DATA,
        }
    }

    pub fn manifest(path: &Path, source: ManifestError) -> Self {
        Error::Manifest {
            path: path.to_owned(),
            source,
        }
    }

    pub fn embedding(path: &Path, source: EmbeddingError) -> Self {
        Error::Embedding {
            path: path.to_owned(),
            source,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_owned(),
            source,
        }
    }

    pub fn core(context: impl Into<String>, source: capcurate_core::Error) -> Self {
        Error::Core {
            context: context.into(),
            source,
        }
    }
}
