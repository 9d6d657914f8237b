use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: expected {expected}")]
    InvalidField {
        field: &'static str,
        expected: &'static str,
    },

    #[error("changeover index r={r} outside [{k}, {n}]")]
    ChangeoverOutOfRange { r: u64, k: u64, n: u64 },

    #[error("strategy {0:?} is not supported by this operation")]
    UnsupportedStrategy(crate::model::StrategyKind),

    #[error("score at index {index} is not finite")]
    NonFiniteScore { index: usize },

    #[error("duplicate score {score} at index {index}; classic hiring needs a strict ranking")]
    DuplicateScore { index: usize, score: f64 },

    #[error("stream of {got} scores does not match workload n_docs={expected}")]
    StreamLength { expected: u64, got: usize },

    #[error("empty stream")]
    EmptyStream,

    #[error("exhaustive enumeration limited to n <= {max}, got {n}")]
    OracleTooLarge { n: u64, max: u64 },

    #[error("sweep grid must have at least 2 points, got {0}")]
    GridTooSmall(usize),

    #[error("trace {path}: {message}")]
    Trace { path: PathBuf, message: String },

    #[error("scenario {path}: {message}")]
    Scenario { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
