use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TegError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("endpoint out of range: edge ({u}, {v}) on a graph with {num_nodes} nodes")]
    EndpointOutOfRange {
        u: usize,
        v: usize,
        num_nodes: usize,
    },

    #[error("label out of range: node {node} has label {label}, expected < {num_classes}")]
    LabelOutOfRange {
        node: usize,
        label: String,
        num_classes: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("insufficient classes: requested {requested}, available {available}")]
    InsufficientClasses { requested: usize, available: usize },

    #[error(
        "pool too small: need {need_classes} classes with at least {need_nodes} nodes each, \
         only {eligible} eligible"
    )]
    PoolTooSmall {
        need_classes: usize,
        need_nodes: usize,
        eligible: usize,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite loss at training episode {episode}")]
    NonFiniteLoss { episode: usize },

    #[error("no anchors")]
    NoAnchors,

    #[error("unknown parameter: {0}")]
    UnknownParam(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("degenerate transform: {0}")]
    DegenerateTransform(String),
}

pub type Result<T> = std::result::Result<T, TegError>;

impl TegError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TegError::Io {
            path: path.into(),
            source,
        }
    }
}
