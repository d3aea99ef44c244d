use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("numeric error in {op}: {detail}")]
    Numeric { op: &'static str, detail: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}

pub(crate) fn numeric<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Numeric { op, detail: detail.into() })
}

pub(crate) fn check_dims(op: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return arg(format!("{op}: dimension mismatch (expected {expected}, got {got})"));
    }
    Ok(())
}
