use thiserror::Error;

pub type Result<T> = std::result::Result<T, FgnsError>;

#[derive(Debug, Error)]
pub enum FgnsError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Bad magic number or otherwise unparseable file.
    #[error("format error: {0}")]
    Format(String),

    /// Two inputs that must agree (image vs label counts, shapes) disagree.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Zero-variance samples whose means differ; the t statistic is unbounded.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("checksum mismatch: expected {expected}, found {found}")]
    ChecksumMismatch { expected: String, found: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("class {class}: {source}")]
    InClass {
        class: u8,
        #[source]
        source: Box<FgnsError>,
    },
}

impl FgnsError {
    pub fn arg(msg: impl Into<String>) -> Self {
        FgnsError::Argument(msg.into())
    }

    pub(crate) fn in_class(class: u8) -> impl FnOnce(FgnsError) -> FgnsError {
        move |e| FgnsError::InClass {
            class,
            source: Box::new(e),
        }
    }

    /// The innermost error, with class context stripped.
    pub fn root(&self) -> &FgnsError {
        match self {
            FgnsError::InClass { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<serde_json::Error> for FgnsError {
    fn from(e: serde_json::Error) -> Self {
        FgnsError::Serialization(e.to_string())
    }
}
