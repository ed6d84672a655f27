use thiserror::Error;

/// Errors raised by the evaluation engine.
#[derive(Debug, Error)]
pub enum FldError {
    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure{}: {detail}", component.map(|c| format!(" at component {c}")).unwrap_or_default())]
    Numerical {
        component: Option<usize>,
        detail: String,
    },

    /// The bandwidth optimization produced a non-finite objective. The trace
    /// holds every objective value recorded before the failure.
    #[error("bandwidth fit diverged at epoch {epoch}")]
    Fit { epoch: usize, trace: Vec<f64> },

    #[error("format error at {location}: {detail}")]
    Format { location: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FldError {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        FldError::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        FldError::Config(msg.into())
    }

    pub(crate) fn format(location: impl Into<String>, detail: impl Into<String>) -> Self {
        FldError::Format {
            location: location.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            FldError::Config(_) => 2,
            FldError::Dimension { .. }
            | FldError::Data(_)
            | FldError::Format { .. }
            | FldError::Io { .. } => 3,
            FldError::Numerical { .. } | FldError::Fit { .. } => 4,
        }
    }
}

pub type Result<T, E = FldError> = std::result::Result<T, E>;
