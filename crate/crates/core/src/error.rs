use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error in {source_name} at line {line}: {source}")]
    Io {
        source_name: String,
        line: usize,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error on {path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("out-of-vocabulary token `{0}`")]
    OutOfVocabulary(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed {artifact} at line {line}: {reason}")]
    Format {
        artifact: &'static str,
        line: usize,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite loss during {stage} at step {step}: {detail}")]
    NonFinite {
        stage: &'static str,
        step: usize,
        detail: String,
    },
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-parsable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::File { .. } => "io",
            Error::EmptyCorpus(_) => "empty-corpus",
            Error::OutOfVocabulary(_) => "oov",
            Error::InvalidInput(_) => "invalid-input",
            Error::Format { .. } => "format",
            Error::DimensionMismatch { .. } => "dimension",
            Error::NonFinite { .. } => "non-finite",
        }
    }
}
