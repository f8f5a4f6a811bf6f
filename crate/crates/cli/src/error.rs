use std::path::Path;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("{0} acceptance criteria failed")]
    Selftest(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Spec(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Format(_) => 4,
            CliError::Selftest(_) => 5,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<ppmu::Error> for CliError {
    fn from(e: ppmu::Error) -> Self {
        use ppmu::Error::*;
        match e {
            CorruptHeader(_) | VersionMismatch { .. } | Truncated { .. } | CorruptPayload(_) | SymbolOutOfRange { .. } => {
                CliError::Format(e.to_string())
            }
            _ => CliError::Spec(e.to_string()),
        }
    }
}
