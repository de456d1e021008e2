use std::path::PathBuf;

pub type Result<T, E = PreimError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum PreimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("degenerate EIM residual (sup norm {0:e})")]
    DegenerateResidual(f64),

    #[error("offline loop did not terminate after {iterations} iterations: {diagnostic}")]
    NonTermination { iterations: usize, diagnostic: String },

    #[error("malformed archive file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PreimError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PreimError::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        PreimError::NumericalFailure(msg.into())
    }
}
