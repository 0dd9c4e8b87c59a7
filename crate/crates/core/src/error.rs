use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no nonzeros")]
    NoNonzeros,

    #[error("empty tensor")]
    EmptyTensor,

    #[error("tensor not sorted for this permutation")]
    NotSorted,

    #[error("invalid mode permutation {0:?}")]
    BadPermutation([usize; 3]),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Gram matrix singular")]
    SingularGram,

    #[error("kernel {requested:?} cannot serve mode {mode} (tree level {level})")]
    KernelMismatch {
        requested: crate::csf::KernelKind,
        mode: usize,
        level: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot generate tensor: {0}")]
    Generate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
