use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain where an operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration field failed validation; `field` is the dotted path.
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("unknown scan parameter `{0}`")]
    UnknownParameter(String),

    #[error("material database error: {0}")]
    Material(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
