use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("{0} contains no triples")]
    EmptyInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("id {id} out of range for {what} (size {size})")]
    OutOfRange {
        what: &'static str,
        id: usize,
        size: usize,
    },

    #[error("projection did not converge after {iterations} cycles (max violation {violation:e})")]
    ProjectionDiverged { iterations: usize, violation: f64 },

    #[error("conjunction constraints are infeasible: alpha {alpha} must exceed {bound} for arity {arity}")]
    InfeasibleConjunction { alpha: f64, arity: usize, bound: f64 },

    #[error("table of {cells} cells exceeds the cap of {cap}; use sparse output")]
    TooLarge { cells: u128, cap: usize },

    #[error("missing embedding for {kind} id {id}")]
    MissingEmbedding { kind: &'static str, id: usize },

    #[error("embedding file: {message} (byte offset {offset})")]
    EmbeddingFormat { message: String, offset: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("relation {0} has no training triples")]
    NoPositives(u32),

    #[error("negative sampling saturated for relation {relation} after {attempts} attempts")]
    SamplingSaturated { relation: u32, attempts: usize },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
