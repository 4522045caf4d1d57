use mlsr_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlsrError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<AutodiffError> for MlsrError {
    fn from(e: AutodiffError) -> Self {
        match e {
            AutodiffError::InvalidArgument(m) => MlsrError::InvalidArgument(m),
            AutodiffError::Format { offset, reason } => MlsrError::Format { offset, reason },
            AutodiffError::Io(e) => MlsrError::Io(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, MlsrError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(MlsrError::InvalidArgument(msg.into()))
}
