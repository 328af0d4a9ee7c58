use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::encoder::EncoderError;
use crate::evaluation::EvaluationError;
use crate::objectives::ObjectiveError;
use crate::preprocess::PreprocessError;
use crate::tokenizer::TokenizerError;
use crate::training::TrainingError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// 1 usage, 2 data, 3 model or compatibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Io { .. } | Error::Corpus(_) | Error::Preprocess(_) | Error::Tokenizer(_) => 2,
            Error::Evaluation(EvaluationError::Objective(_)) => 3,
            Error::Evaluation(_) => 2,
            Error::Training(TrainingError::Io(_)) => 2,
            Error::Training(TrainingError::EmptySet(_)) => 2,
            Error::Encoder(_) | Error::Objective(_) | Error::Training(_) => 3,
        }
    }
}
