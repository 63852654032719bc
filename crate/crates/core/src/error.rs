use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed model document: {0}")]
    MalformedModel(String),

    #[error("tree {tree}, node {node}: {reason}")]
    InvalidNode { tree: usize, node: usize, reason: String },

    #[error("invalid forest: {0}")]
    InvalidForest(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value {value} at feature {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("{players} players exceeds the limit of {limit}")]
    TooManyPlayers { players: usize, limit: usize },

    #[error("shapley weight undefined for k={k}, d={d}")]
    WeightOutOfRange { k: usize, d: usize },

    #[error("({parent}, {child}) is not an edge of the tree")]
    InvalidEdge { parent: usize, child: usize },

    #[error("invalid partition index: {0}")]
    InvalidPartition(String),

    #[error("invalid embedding input: {0}")]
    InvalidEmbedding(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}
