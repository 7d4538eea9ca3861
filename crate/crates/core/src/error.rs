use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value at step {step} ({context})")]
    Divergence { step: usize, context: &'static str },

    #[error("unsupported scheme: {0}")]
    UnsupportedScheme(String),

    #[error("sensitivity storage needs {needed} entries, budget is {budget}")]
    Capacity { needed: usize, budget: usize },

    #[error("iteration {iteration}: {diverged} of {total} paths diverged")]
    BatchFailure {
        iteration: u64,
        diverged: usize,
        total: usize,
    },

    #[error("non-finite gradient rejected")]
    NonFiniteGradient,

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by a single path blowing up, which batch
    /// averaging drops instead of aborting.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
