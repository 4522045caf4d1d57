use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(AutodiffError::InvalidArgument(msg.into()))
}
