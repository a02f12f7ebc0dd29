//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape mismatch between tensors; names both shapes.
    #[error("dimension mismatch: {op} got {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Invalid configuration value (learning rate, warmup fraction, rates, ...).
    #[error("config error: {0}")]
    Config(String),

    /// The CTC target cannot be represented within the available positions.
    /// Distinct from numeric failure: callers use this for batch filtering.
    #[error("infeasible target: needs {needed} positions, only {available} available")]
    InfeasibleTarget { needed: usize, available: usize },

    /// A CTC target contained the blank symbol.
    #[error("invalid target: blank symbol at index {0}")]
    InvalidTarget(usize),

    /// An insertion exceeds the local slot capacity of an interleaved sequence.
    #[error("infeasible insert: {requested} tokens requested, capacity {capacity}")]
    InfeasibleInsert { requested: usize, capacity: usize },

    /// Exhaustive-enumeration guard tripped (V^P too large).
    #[error("oracle guard exceeded: {paths} paths > {limit}")]
    OracleGuard { paths: u64, limit: u64 },

    /// Concatenated sequence would overflow the positional table.
    #[error("sequence length {length} exceeds max_positions {max_positions}")]
    Length {
        length: usize,
        max_positions: usize,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("corpus parse error at line {line}: {msg}")]
    CorpusParse { line: usize, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Training diverged; carries the last good checkpoint if one was written.
    #[error("training aborted at step {step}: non-finite loss (last good checkpoint: {last_checkpoint:?})")]
    NanLoss {
        step: u64,
        last_checkpoint: Option<PathBuf>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
