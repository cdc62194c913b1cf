use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or length mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Input value outside the operation's domain (non-finite, non-binary, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Empty input where at least one element is required.
    #[error("empty input: {0}")]
    Empty(String),
    /// Invalid configuration (hyperparameters, model spec, config file).
    #[error("invalid config: {0}")]
    Config(String),
    /// A backward pass was requested without the matching forward cache.
    #[error("missing forward state: {0}")]
    State(String),
    /// Malformed or inconsistent data file.
    #[error("data error: {0}")]
    Data(String),
    /// Non-finite value where training must abort (NaN loss / gradient).
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
