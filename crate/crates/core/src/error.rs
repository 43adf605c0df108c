use std::path::PathBuf;

use crate::annotation::AnnotationError;
use crate::catalog::CatalogError;
use crate::classifier::ClassifierError;
use crate::eval::EvalError;
use crate::sampling::SamplingError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Engine-level error; wraps the per-module error types.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("corrupt checkpoint at {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("no checkpoint found in {0}")]
    MissingCheckpoint(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
