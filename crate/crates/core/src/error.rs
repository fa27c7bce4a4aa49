use thiserror::Error;

/// Errors raised by the geometry, model and training routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("rank deficient Jacobian: smallest singular value {smallest:e} is below {tolerance:e} times the largest ({largest:e})")]
    RankDeficient { smallest: f64, largest: f64, tolerance: f64 },

    #[error("point outside the chart domain: {0}")]
    OutsideDomain(String),

    #[error("metric tensor is singular")]
    SingularMetric,

    #[error("index {index} is not an interior point of a path with {steps} steps")]
    BoundaryIndex { index: usize, steps: usize },

    #[error("transported vector collapsed under projection at step {step}")]
    DegenerateProjection { step: usize },

    #[error("an encoder is required for the `encoder` gradient mode")]
    EncoderRequired,

    #[error("encoder round trip residual {residual:e} exceeds budget {budget:e} at step {step}")]
    EncoderDivergence { step: usize, residual: f64, budget: f64 },

    #[error("layer {layer} expects {expected} inputs but the previous layer produces {found}")]
    ChainMismatch { layer: usize, expected: usize, found: usize },

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("malformed model document: {0}")]
    MalformedModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all pairwise distances are zero")]
    ZeroDistances,

    #[error("training diverged at iteration {iteration} (loss = {loss})")]
    Diverged { iteration: usize, loss: f64 },

    #[error("geodesic between points {i} and {j} failed: {source}")]
    PairFailed {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, found })
    }
}
