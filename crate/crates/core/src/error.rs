use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("degenerate mask: every entry of a softmax row is masked")]
    DegenerateMask,
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown blank id `{0}`")]
    UnknownBlank(String),
    #[error("blank `{0}` has neither a fill nor a slot; cannot label its pairs")]
    Unlabelable(String),
    #[error("unfilled blanks: {}", .0.join(", "))]
    UnfilledBlanks(Vec<String>),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("embedding file error: {0}")]
    Embedding(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the error stems from bad input data or configuration rather
    /// than a defect in the numerical machinery.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            Error::Dimension { .. }
                | Error::DegenerateMask
                | Error::NonFinite(_)
                | Error::Evaluation(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
