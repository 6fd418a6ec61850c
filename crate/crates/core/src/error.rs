use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty training corpus")]
    EmptyCorpus,

    #[error("n-gram order must be ≥ 2, got {0}")]
    NgramOrder(usize),

    #[error("empty word has no character n-grams")]
    EmptyWord,

    #[error("corpus too small: {len} tokens, need at least {required} (batch {batch} × (bptt {bptt} + 1))")]
    CorpusTooSmall {
        len: usize,
        required: usize,
        batch: usize,
        bptt: usize,
    },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: index {index} out of range for {bound}")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("compose called on gramless word")]
    Gramless,

    #[error("special tokens have no character composition ({0:?})")]
    SpecialToken(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown word {0:?} and the vocabulary has no unknown-word token")]
    UnknownWord(String),

    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("malformed {what} at line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
