use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the pure (offline) parts of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),

    #[error("node `{0}` has more than one parent")]
    MultipleParents(String),

    #[error("cycle detected through `{0}`")]
    Cycle(String),

    #[error("node `{0}` is not reachable from the root")]
    Orphan(String),

    #[error("unknown technique `{0}`")]
    UnknownTechnique(String),

    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),

    #[error("instance `{id}`: unknown label `{label}`")]
    UnknownLabel { id: String, label: String },

    #[error("instance `{id}`: legacy label `{label}` is not covered by the split map")]
    UnmappedLegacyLabel { id: String, label: String },

    #[error("id sets differ: {0}")]
    IdMismatch(String),

    #[error("technique sets differ: {0}")]
    TechniqueMismatch(String),

    #[error("expected a {expected} matrix, found {found}")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("threshold grid is empty or invalid: {0}")]
    EmptyGrid(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("ensemble has no members")]
    NoMembers,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Service(#[from] crate::services::ServiceError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn malformed(err: impl std::fmt::Display) -> Self {
        Error::Malformed(err.to_string())
    }

    /// True for failures caused by the environment (files, network) rather
    /// than by the content of the inputs.
    pub fn is_environmental(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Service(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
