use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor shapes for an operation.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A class label outside `[0, classes)`.
    #[error("label error: sample {index} has label {label}, expected a value in [0, {classes})")]
    Label {
        index: usize,
        label: usize,
        classes: usize,
    },

    /// Batch statistics need at least two values per channel.
    #[error("degenerate batch in {op}: {detail}")]
    DegenerateBatch { op: &'static str, detail: String },

    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: u64, detail: String },

    #[error("schema error: {0}")]
    Schema(String),

    /// Malformed checkpoint or dataset cache file.
    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {components}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        components: String,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }
}
