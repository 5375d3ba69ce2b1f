use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },

    #[error("edge ({src}, {dst}) given with conflicting weights {first} and {second}")]
    ConflictingWeight {
        src: usize,
        dst: usize,
        first: f64,
        second: f64,
    },

    #[error("node {0} has zero degree; 1/sqrt(deg) is undefined")]
    ZeroDegree(usize),

    #[error("duplicate node id {0} in node list")]
    DuplicateNode(usize),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("NaN produced in block {layer}")]
    NanInLayer { layer: usize },

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("operator dimension {dim} exceeds dense assembly limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("ROC-AUC undefined: target column {column} has a single class in this split")]
    SingleClass { column: usize },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("summed query vector has zero norm")]
    DegenerateQuery,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
