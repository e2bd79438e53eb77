use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("topic {topic} out of range for {n_topics} topics")]
    TopicOutOfRange { topic: usize, n_topics: usize },
    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },
    #[error("malformed sentence: {0}")]
    MalformedSentence(String),
    #[error("target word {word} is not in the vocabulary support")]
    TargetOutsideSupport { word: usize },
    #[error("empty document")]
    EmptyDocument,
    #[error("empty sentence")]
    EmptySentence,
    #[error("sigma must be strictly positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no training data")]
    NoTrainingData,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{n_topics} topics exceeds the limit of {limit} for {what}")]
    TooManyTopics {
        n_topics: usize,
        limit: usize,
        what: &'static str,
    },
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("training diverged at document {doc_id} (step {step}): objective {value}")]
    Divergence {
        doc_id: String,
        step: usize,
        value: f64,
    },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::Numerics(NumericsError::NonFinite { .. })
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
