use std::path::PathBuf;

use crate::schema::ConceptId;
use crate::text_model::TokenId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("token id {0} is not in the vocabulary")]
    InvalidToken(u32),
    #[error("reserved token {0:?} is not allowed inside a concept key")]
    ReservedToken(TokenId),
    #[error("concept key must not be empty")]
    EmptyKey,
    #[error("sequence is not a prefix of any concept key")]
    InvalidPrefix,
    #[error("sequence is not a concept key in the schema")]
    NotInSchema,
    #[error("schema changed during search (generation {expected}, now {found})")]
    StaleSchema { expected: u64, found: u64 },
    #[error("schema is empty; nothing to decode against")]
    EmptySchema,
    #[error("unknown concept {0}")]
    UnknownConcept(ConceptId),
    #[error("concept {0} has never been observed in any turn")]
    ConceptNeverObserved(ConceptId),
    #[error("concept {0} has no neighbors")]
    IsolatedConcept(ConceptId),
    #[error("unknown turn {0}")]
    UnknownTurn(u32),
    #[error("turn text must not be empty")]
    EmptyText,
    #[error("input must not be empty")]
    EmptyInput,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("language model error: {0}")]
    LanguageModel(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported snapshot version {found} (this build reads version {supported})")]
    VersionMismatch { found: String, supported: u32 },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
