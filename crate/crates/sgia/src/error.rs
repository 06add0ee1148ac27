use thiserror::Error;

#[derive(Debug, Error)]
pub enum SgiaError {
    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("bad file format: {0}")]
    BadFormat(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, SgiaError>;
