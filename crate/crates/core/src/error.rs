use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unknown entity id `{0}`")]
    UnknownEntity(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("backward pass requires a train-mode forward pass with cached activations")]
    MissingCache,

    #[error("relation {target} is not in the valid set of its pair")]
    TargetNotValid { target: usize },

    #[error("relation vocabulary mismatch: checkpoint has {checkpoint} relations, dataset has {dataset}")]
    VocabularyMismatch { checkpoint: usize, dataset: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid container: {0}")]
    Format(String),

    #[error("{key} file not found: {path}")]
    MissingInput { key: &'static str, path: PathBuf },

    #[error("missing prerequisite {path}: run `{command}` first")]
    Prerequisite { path: PathBuf, command: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("expected {expected} tab-separated fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("empty field")]
    EmptyField,
    #[error("expected {expected} floats, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("unparsable float `{0}`")]
    BadFloat(String),
    #[error("invalid UTF-8")]
    Utf8,
}

impl Error {
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping file context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::File { source, .. } => source.root(),
            other => other,
        }
    }
}
