use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("unknown node type {0}")]
    UnknownNodeType(usize),
    #[error("unknown relation {0}")]
    UnknownRelation(usize),
    #[error("node {node} out of range for type {node_type} with {count} nodes")]
    NodeOutOfRange {
        node_type: usize,
        node: usize,
        count: usize,
    },
    #[error("edge ({src}, {dst}) out of range for a {rows}x{cols} relation")]
    EdgeOutOfRange {
        src: usize,
        dst: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid meta-path: {0}")]
    InvalidMetaPath(String),
    #[error("log of non-positive value {0}")]
    NonPositiveLog(f64),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("masked reduction over an empty row {0}")]
    EmptyMaskRow(usize),
    #[error("non-finite loss {value} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("{0}")]
    Infeasible(String),
}
