use std::path::PathBuf;

use crate::nifti::NiftiError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the evaluation engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Nifti(#[from] NiftiError),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid detection: {0}")]
    InvalidDetection(String),

    #[error("match inputs mix keys: expected image '{image_id}' class {class_id}, found image '{found_image}' class {found_class}")]
    MixedKeys {
        image_id: String,
        class_id: u32,
        found_image: String,
        found_class: u32,
    },

    #[error("no ground truth objects for this evaluation")]
    NoGroundTruth,

    #[error("no images to evaluate")]
    NoImages,

    #[error("ranking needs at least two methods, got {0}")]
    TooFewMethods(usize),

    #[error("unknown baseline method '{0}'")]
    UnknownBaseline(String),

    #[error("duplicate method id '{0}'")]
    DuplicateMethod(String),

    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("duplicate image_id '{0}' in manifest")]
    DuplicateImage(String),

    #[error("unknown image_id '{image_id}' in {source_name}")]
    UnknownImage { image_id: String, source_name: String },

    #[error("referenced path does not exist: {0}")]
    DanglingPath(PathBuf),

    #[error("I/O error on {path}: {source}")]
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

    /// Broad category used by command-line front ends to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_)
            | Error::TooFewMethods(_)
            | Error::UnknownBaseline(_)
            | Error::DuplicateMethod(_) => ErrorCategory::Config,
            Error::Io { .. } => ErrorCategory::Io,
            Error::Nifti(e) if e.is_io() => ErrorCategory::Io,
            _ => ErrorCategory::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Io,
}
