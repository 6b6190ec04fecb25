use thiserror::Error;

pub type Result<T, E = ToolError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error(transparent)]
    Core(#[from] swt_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("usage: {0}")]
    Usage(String),
}

impl ToolError {
    /// Stable category prefix used on the CLI's error line.
    pub fn category(&self) -> &'static str {
        match self {
            ToolError::Core(e) => e.category(),
            ToolError::Io(_) => "io",
            ToolError::Format(_) => "format",
            ToolError::Image(_) => "image",
            ToolError::Usage(_) => "usage",
        }
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        ToolError::Format(msg.into())
    }
}
