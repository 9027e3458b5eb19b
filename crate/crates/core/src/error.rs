use thiserror::Error;

/// Errors raised by the analytical and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value is out of its admissible domain.
    #[error("invalid value for `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },

    /// An argument lies outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A lattice generator with (numerically) zero determinant.
    #[error("lattice generator is rank deficient (|det| = {det:e})")]
    RankDeficient { det: f64 },

    /// Enumeration would visit more integer points than allowed.
    #[error("lattice enumeration box holds {count} points, limit is {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("codebook parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(key: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        key,
        reason: reason.into(),
    }
}
