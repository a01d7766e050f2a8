//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// A malformed record in an input file, with its 1-based line number.
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    /// A statement violating the span invariants, identified by index.
    #[error("statement {index}: {message}")]
    InvalidStatement { index: usize, message: String },

    #[error("zero-norm vector in {context}")]
    ZeroNorm { context: &'static str },

    #[error("{context}: expected dimension {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A relation that cannot satisfy an operation's requirements.
    #[error("relation `{name}`: {problem}")]
    Relation { name: String, problem: String },

    #[error("no prototype for relation id {relation}")]
    MissingPrototype { relation: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint version {found} unsupported (this build reads version {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("no stored embedding for statement index {0}")]
    MissingEmbedding(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
