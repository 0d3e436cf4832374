use std::path::PathBuf;

use ilos_core::dataset::DatasetError;
use ilos_core::eval::EvalError;
use ilos_core::ingest::IngestError;
use ilos_core::rits::RitsError;
use ilos_core::synth::SynthError;
use ilos_core::transfer::TransferError;
use ilos_core::trees::TreeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("missing artifact from stage `{stage}`: {path} (run `ilos {stage}` first)")]
    MissingArtifact { stage: &'static str, path: PathBuf },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Rits(#[from] RitsError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    fn is_numeric(&self) -> bool {
        match self {
            Error::Rits(e) => matches!(e, RitsError::NonFiniteLoss { .. } | RitsError::NonFiniteInput(_)),
            Error::Transfer(TransferError::Rits(e)) => matches!(e, RitsError::NonFiniteLoss { .. } | RitsError::NonFiniteInput(_)),
            Error::Ingest(IngestError::NonFinite { .. }) => true,
            Error::Eval(EvalError::NonFinite(_)) => true,
            _ => false,
        }
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::MissingArtifact { .. } => 3,
            e if e.is_numeric() => 4,
            _ => 1,
        }
    }
}
