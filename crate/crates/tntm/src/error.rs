use std::path::{Path, PathBuf};

/// Errors of the file formats and the command line. Each maps to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration.
    #[error("{0}")]
    Usage(String),
    /// Unreadable or malformed input data.
    #[error("{0}")]
    Data(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot: {0}")]
    Snapshot(#[from] crate::snapshot::SnapshotError),
    #[error(transparent)]
    Model(#[from] tntm_core::Error),
    /// A diagnostic failed (for example a Geweke z-score out of range).
    #[error("{0}")]
    Check(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 usage or configuration, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use tntm_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io { .. } | CliError::Snapshot(_) => 2,
            CliError::Check(_) => 3,
            CliError::Model(e) => match e {
                E::InvalidHyper(_) | E::Validation(_) | E::Structural(_) | E::Unsupported(_) => 1,
                E::Input(_) => 2,
                E::Numerical(_) | E::Logic(_) | E::StaleGram => 3,
            },
        }
    }
}
