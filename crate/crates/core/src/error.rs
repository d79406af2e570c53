use thiserror::Error;

pub type Result<T> = std::result::Result<T, CipError>;

#[derive(Debug, Error)]
pub enum CipError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input violates a data-model invariant (ordering, finiteness, size).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParameter { name: &'static str, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Factorization failed even at the largest permitted jitter.
    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("audit refused: trace has {d} points, cap is {cap} (raise it with --cap)")]
    AuditCapExceeded { d: usize, cap: usize },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl CipError {
    /// Whether the failure is numerical (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, CipError::Singular(_) | CipError::NoConvergence(_))
    }

    pub(crate) fn param(name: &'static str, msg: impl Into<String>) -> Self {
        CipError::InvalidParameter {
            name,
            msg: msg.into(),
        }
    }
}
