use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular matrix: pivot {pivot} below threshold")]
    Singular { pivot: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("divergence at t = {time:e} (iteration {iteration})")]
    Divergence { time: f64, iteration: usize },

    #[error("implicit step failed: singular system for subnode {subnode}")]
    SingularImplicit { subnode: usize },

    #[error("missing stiff split on system `{0}`")]
    MissingStiffSplit(String),

    #[error("reference solution did not converge: relative endpoint change {change:e}")]
    ReferenceNotConverged { change: f64 },

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
