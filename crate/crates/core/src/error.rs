use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid seed: LFSR seed state must be nonzero")]
    InvalidSeed,

    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("degenerate data: measurement of source {source_index} is identically zero")]
    DegenerateData { source_index: usize },

    #[error("unbounded result: {0}")]
    Unbounded(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSeed => "invalid-seed",
            Error::UnsupportedParameter(_) => "unsupported-parameter",
            Error::Dimension { .. } => "dimension",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::InvalidGeometry(_) => "invalid-geometry",
            Error::DegenerateData { .. } => "degenerate-data",
            Error::Unbounded(_) => "unbounded",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
