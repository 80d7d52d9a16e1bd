use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure at step {step}: {detail}")]
    Numerical { step: usize, detail: String },

    /// Failure inside a pyramid stage, tagged with where it happened.
    #[error("stage {stage}, iteration {iteration}, patch {patch}: {source}")]
    Stage {
        stage: usize,
        iteration: usize,
        patch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("coverage gap: {0}")]
    Coverage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),

    #[error("manifest error: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::Domain(_) => "domain",
            Error::Numerical { .. } => "numerical",
            Error::Stage { source, .. } => source.kind(),
            Error::Coverage(_) => "coverage",
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Checksum(_) => "checksum",
            Error::Manifest(_) => "manifest",
        }
    }

    /// Process exit status: 1 usage/config, 2 numerical failure, 3 I/O or integrity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::ShapeMismatch(_)
            | Error::Domain(_)
            | Error::Coverage(_) => 1,
            Error::Numerical { .. } | Error::NonFinite(_) => 2,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Io { .. } | Error::Format(_) | Error::Checksum(_) | Error::Manifest(_) => 3,
        }
    }
}
