use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("invalid causal model: {0}")]
    InvalidScm(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Wraps the error with a human-readable context string.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "numeric",
            Error::InvalidScm(_) => "invalid_scm",
            Error::Fit(_) => "fit",
            Error::Config(_) => "config",
            Error::Empty(_) => "empty",
            Error::Diverged { .. } => "diverged",
            Error::Data(_) => "data",
            Error::Context { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
