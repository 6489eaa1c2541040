//! Shared error type for the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DmlError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Metric is mathematically undefined on the given data (e.g. R² on a
    /// constant truth vector).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    /// A pipeline phase failed; wraps the underlying error with its phase.
    #[error("{phase} phase: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<DmlError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Model file could not be parsed. `offset` is the byte position of the
    /// first problem (0 when the position is unknown).
    #[error("model parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    UnsupportedFormat { found: u64, supported: u64 },
}

impl DmlError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DmlError::InvalidInput(msg.into())
    }

    pub(crate) fn in_phase(phase: &'static str) -> impl FnOnce(DmlError) -> DmlError {
        move |source| DmlError::Phase {
            phase,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, DmlError>;
