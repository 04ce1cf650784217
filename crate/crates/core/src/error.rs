use thiserror::Error;

pub type Result<T> = std::result::Result<T, QlleError>;

#[derive(Debug, Error)]
pub enum QlleError {
    /// A precondition on the inputs of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<QlleError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl QlleError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        QlleError::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        QlleError::Config(msg.into())
    }

    /// Attributes an error to a pipeline stage.
    pub fn in_stage(self, stage: &'static str) -> Self {
        QlleError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {{
        // NaN operands make the condition false and so fail the check
        let ok: bool = $cond;
        if !ok {
            return Err($crate::error::QlleError::Contract(format!($($arg)+)));
        }
    }};
}
pub(crate) use ensure;
