use thiserror::Error;

/// Errors raised by the dispatch pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("edge {edge} references unknown node `{node}`")]
    DanglingEndpoint { edge: u32, node: String },
    #[error("edge {0} has nonpositive length")]
    NonpositiveLength(u32),
    #[error("edge {0} is a self-loop")]
    SelfLoop(u32),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid origin/destination: {0}")]
    InvalidOd(String),
    #[error("destination unreachable from every origin")]
    Unreachable,
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("radius must be positive")]
    ZeroRadius,
    #[error("matrix is identically zero")]
    ZeroMatrix,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("target radius is unbounded: a path has zero cost under every metric")]
    UnboundedRadius,
    #[error("non-finite loss at iteration {0}")]
    NonfiniteLoss(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("risk slope must be positive at t = {0} s")]
    NonpositiveSlope(f64),
    #[error("simulation exceeded {0} segments")]
    CycleGuard(usize),
    #[error("prescribed prefix is broken at position {0}")]
    PrefixBroken(usize),
    #[error("empty input")]
    Empty,
    #[error("all paired differences are zero")]
    AllZero,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
