use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// More steps requested than the policy or domain can serve.
    #[error("capacity exceeded: {requested} steps requested but only {available} available")]
    Capacity { requested: usize, available: usize },

    /// A policy proposed a point it had already visited (or one outside the domain).
    #[error("policy integrity violated: {0}")]
    PolicyIntegrity(String),

    /// An enumeration would blow past a configured cap.
    #[error("size cap exceeded: {what} is {size}, cap is {cap}")]
    Size { what: String, size: u128, cap: u128 },

    /// Input outside the domain of an operation (empty sequence, t out of range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Process model cannot be built or sampled (e.g. non-PSD covariance).
    #[error("model error: {0}")]
    Model(String),

    /// Standardization of a process with zero variance.
    #[error("degenerate process: {0}")]
    Degenerate(String),

    /// Operation not defined for the given input kind.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Failed to parse a policy descriptor.
    #[error("descriptor parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }

    pub(crate) fn size(what: impl Into<String>, size: u128, cap: u128) -> Self {
        Error::Size {
            what: what.into(),
            size,
            cap,
        }
    }
}
