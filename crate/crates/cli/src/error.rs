use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("no image pairs found: {0}")]
    EmptySet(String),

    #[error(transparent)]
    Core(#[from] easrn_core::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for anything the user must fix in the
    /// invocation or inputs before a rerun can succeed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use easrn_core::Error as E;
        match self {
            CliError::Config(_) | CliError::EmptySet(_) | CliError::Json { .. } => 2,
            CliError::Core(E::Config(_) | E::MissingWeight(_) | E::WeightShape { .. } | E::Format(_)) => 2,
            _ => 1,
        }
    }
}
