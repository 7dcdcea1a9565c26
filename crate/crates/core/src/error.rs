use thiserror::Error;

/// Errors raised by the tensor algebra, operators and pipelines.
#[derive(Debug, Error)]
pub enum SisrError {
    /// Operand shapes do not agree.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A parameter is outside its legal range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An iterative solve produced a non-finite value or a singular system.
    #[error("numeric divergence: {message}")]
    Divergence {
        message: String,
        /// Residuals recorded up to the failure.
        trace: Vec<f64>,
    },

    /// A volume file or its sidecar is missing or inconsistent.
    #[error("{path}: {kind}")]
    Format { path: String, kind: FormatError },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Distinguishes the ways a stored volume can be unreadable.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("missing header sidecar")]
    MissingSidecar,
    #[error("payload is {actual} bytes, header implies {expected}")]
    LengthMismatch { expected: u64, actual: u64 },
    #[error("unknown dtype {0:?}")]
    UnknownDtype(String),
    #[error("malformed header: {0}")]
    BadHeader(String),
}

impl SisrError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        SisrError::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        SisrError::Parameter(msg.into())
    }

    /// Process exit code for the command-line tool: 1 usage/parameter,
    /// 2 I/O, 3 dimension, 4 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            SisrError::Parameter(_) => 1,
            SisrError::Io { .. } | SisrError::Format { .. } => 2,
            SisrError::Dimension(_) => 3,
            SisrError::Divergence { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, SisrError>;
