use crate::messages::Domain;

/// Errors produced by model construction, inference, and the oracle.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite cost: {0}")]
    NonFiniteCost(String),

    #[error("({0}, {1}) is not an edge of the graph")]
    NotAnEdge(usize, usize),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("expected {expected:?}-domain messages, found {found:?}")]
    DomainMismatch { expected: Domain, found: Domain },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("enumeration of {configurations:.3e} configurations exceeds the budget of {budget}")]
    BudgetExceeded { configurations: f64, budget: u64 },

    #[error("graph is not a tree")]
    NotATree,

    #[error("label {label} out of range for node {node} ({labels} labels)")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        labels: usize,
    },

    #[error("node {node} is not in the subtree rooted at {ancestor}")]
    NotInSubtree { node: usize, ancestor: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("image: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
