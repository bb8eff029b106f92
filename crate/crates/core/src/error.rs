use std::fmt;
use std::io;
use std::path::PathBuf;

use crate::scorers::ScorerError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage, used to tag errors raised while answering a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Retrieve,
    Rank,
    Rm3,
    Read,
    Fuse,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Retrieve, Stage::Rank, Stage::Rm3, Stage::Read, Stage::Fuse];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Retrieve => "retrieve",
            Stage::Rank => "rank",
            Stage::Rm3 => "rm3",
            Stage::Read => "read",
            Stage::Fuse => "fuse",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate paragraph id `{0}`")]
    DuplicateParagraph(String),

    #[error("unknown document ordinal {0}")]
    UnknownOrdinal(usize),

    #[error("unknown paragraph id `{0}`")]
    UnknownParagraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: ScorerError,
    },

    #[error(transparent)]
    Scorer(#[from] ScorerError),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("index format error: {0}")]
    IndexFormat(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
