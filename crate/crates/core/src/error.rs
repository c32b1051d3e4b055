use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("cell {0:?} lies outside the window")]
    OutOfWindow(Vec<isize>),

    #[error("linear index {index} is out of range for a window of {len} cells")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("cell set is empty")]
    EmptySet,

    #[error("cell set is not connected")]
    Disconnected,

    #[error("cell set has no adjacent cells (it covers the whole window in domain-only mode)")]
    NoAdjacentCells,

    #[error("field has {got} values but the lattice has {expected} cells")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("fields live on different lattices")]
    LatticeMismatch,

    #[error("scale must be at least 1")]
    ZeroScale,

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("engine precondition violated at scale {scale}: extremal zone of size {size} containing cell {cell}")]
    Precondition { scale: usize, size: usize, cell: usize },

    #[error("invalid scale band {lo}:{hi}")]
    InvalidBand { lo: usize, hi: usize },

    #[error("could not satisfy the generator precondition after {0} attempts")]
    RetriesExhausted(usize),

    #[error("config error on line {line}: {message}")]
    Config { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
