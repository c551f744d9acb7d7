//! Crate-wide error type.

/// Errors surfaced by the pipeline, grouped by failure class rather than by
/// module so callers can match on what went wrong, not where.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration violates its stated invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation was called outside its precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// Data generation could not satisfy its target within budget.
    #[error("generation failed: {0}")]
    Generation(String),

    /// A training loop aborted (non-finite gradients or parameters).
    #[error("training failed: {0}")]
    Training(String),

    /// Reward scale calibration degenerated.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// A metric has no defined value on the given input.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// A budget (state keys, enumeration size) was exceeded.
    #[error("resource budget exceeded: {0}")]
    Resource(String),

    /// A subcommand is missing an upstream artifact.
    #[error("missing dependency: {0}")]
    Dependency(String),

    /// Artifacts from different configurations were mixed.
    #[error("provenance mismatch: {0}")]
    Provenance(String),

    /// A persisted artifact is malformed; `offset` is the byte position at
    /// which the problem was detected.
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
