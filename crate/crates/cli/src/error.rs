use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures surfaced by the command-line tool, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input data.
    #[error("{0}")]
    Data(String),

    /// The estimator could not be applied to the data.
    #[error("{0}")]
    Model(String),

    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_MODEL: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Model(_) => EXIT_MODEL,
            CliError::Config(_) => EXIT_CONFIG,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<spikeid_core::Error> for CliError {
    fn from(e: spikeid_core::Error) -> Self {
        use spikeid_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Data(_) | E::DimensionMismatch { .. } | E::Degenerate(_) => CliError::Data(msg),
            E::ModelNotApplicable | E::Estimation(_) | E::NoConvergence { .. } => CliError::Model(msg),
            E::Config(_) => CliError::Config(msg),
        }
    }
}
