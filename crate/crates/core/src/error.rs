use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A numeric argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value fails validation; the first field names the
    /// offending key.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A trial step was requested that the protocol does not allow.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The trial is no longer accepting cohorts.
    #[error("lifecycle error: {0}")]
    Lifecycle(String),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
