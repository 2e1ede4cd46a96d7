use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the pipeline. The CLI maps each variant to a distinct
/// exit code, so keep the variants coarse and stable.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, layout, or argument.
    #[error("configuration error: {0}")]
    Config(String),

    /// Dimension/shape contract violated.
    #[error("shape error: {0}")]
    Shape(String),

    /// A non-finite value appeared in a numeric computation.
    #[error("numeric error: non-finite {what} ({value})")]
    Numeric { what: String, value: f64 },

    /// Corrupted or incompatible on-disk artifact (bad checksum, magic,
    /// or version).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A required artifact (dataset, checkpoint, layout file) is absent.
    #[error("missing artifact: {0}")]
    Missing(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn numeric(what: impl Into<String>, value: f64) -> Self {
        Error::Numeric {
            what: what.into(),
            value,
        }
    }

    pub fn integrity(msg: impl Into<String>) -> Self {
        Error::Integrity(msg.into())
    }

    pub fn missing(msg: impl Into<String>) -> Self {
        Error::Missing(msg.into())
    }
}

/// Returns `value` unchanged if finite, otherwise a numeric error naming the
/// offending term.
pub(crate) fn ensure_finite(what: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numeric(what, value))
    }
}
