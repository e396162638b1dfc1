use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("ellipticity check failed: {0}")]
    NotElliptic(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("did not converge: {0}")]
    Convergence(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Input(msg.into()))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(LabError::Dimension { expected, got });
    }
    Ok(())
}
