use std::fmt;
use std::path::Path;

use schemamem_core::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse(String),
    State(String),
    Other(String),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Other(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Parse(_) => 3,
            CliError::State(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage error", m),
            CliError::Parse(m) => ("parse error", m),
            CliError::State(m) => ("state error", m),
            CliError::Other(m) => ("error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidArgument(_) => CliError::Usage(msg),
            Error::Parse { .. } | Error::EmptyText => CliError::Parse(msg),
            Error::Io { .. } | Error::LanguageModel(_) => CliError::Other(msg),
            Error::EmptySchema => CliError::State(format!("{msg}; ingest a transcript first")),
            _ => CliError::State(msg),
        }
    }
}
