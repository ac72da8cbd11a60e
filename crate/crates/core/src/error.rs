use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value outside the domain an operation accepts.
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("parse error at {location}: {reason}")]
    Parse { location: String, reason: String },

    #[error("unsupported entity type `{0}`")]
    UnsupportedType(String),

    #[error("line {line}: timestamp {t} precedes previous timestamp {previous}")]
    Ordering { line: usize, t: i64, previous: i64 },

    #[error("template error: {0}")]
    Template(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("dialog expired: {0}")]
    Expired(String),

    #[error("conflict: {0}")]
    Conflict(String),

    /// The statistic is undefined for the sample (e.g. every difference is zero).
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(location: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            reason: reason.into(),
        }
    }
}

/// Rejects NaN/inf and negative values.
pub(crate) fn check_non_negative(field: &str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::invalid(field, format!("{value} is not finite")));
    }
    if value < 0.0 {
        return Err(Error::invalid(field, format!("{value} is negative")));
    }
    Ok(())
}
