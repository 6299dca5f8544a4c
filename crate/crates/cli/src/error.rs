use std::path::Path;

use stablecvar::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Data files disagree with the hashes recorded in a manifest.
    #[error("manifest check failed: {0}")]
    Manifest(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("replicate {id}: {source}")]
    Replicate {
        id: usize,
        #[source]
        source: Box<CliError>,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn in_replicate(id: usize) -> impl Fn(CliError) -> CliError {
        move |e| CliError::Replicate { id, source: Box::new(e) }
    }

    /// 2 validation, 3 numeric or sampler failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Manifest(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Replicate { source, .. } => source.exit_code(),
            CliError::Core(e) => match e {
                CoreError::Domain(_)
                | CoreError::Shape(_)
                | CoreError::Validation(_)
                | CoreError::Parse(_)
                | CoreError::Comparison(..) => 2,
                CoreError::Decomposition { .. }
                | CoreError::Conditioning { .. }
                | CoreError::Numeric(_)
                | CoreError::Estimation(_)
                | CoreError::Sampler { .. }
                | CoreError::Stall { .. } => 3,
                CoreError::Io { .. } => 4,
            },
        }
    }
}
