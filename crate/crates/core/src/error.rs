use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian")]
    NotHermitian,
    #[error("operator is not unitary")]
    NotUnitary,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("index {index} out of range (limit {limit})")]
    InvalidIndex { index: usize, limit: usize },
    #[error("state has zero purity")]
    ZeroState,
    #[error("interval list is empty")]
    EmptyIntervals,
    #[error("ideal map is singular")]
    SingularMap,
    #[error("sequence contains finite segments; only delays and ideal rotations can be compiled")]
    NotIdeal,
    #[error("malformed segment table, line {line}: {reason}")]
    Table { line: usize, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
