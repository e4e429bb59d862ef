use thiserror::Error;

/// Errors raised by the library.
///
/// Contract violations are caller mistakes (mismatched dimensions, parameters
/// outside their domain). The other variants describe inputs that are
/// well-formed but cannot be evaluated in the requested way.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate structured spec: {0}")]
    DegenerateSpec(String),

    #[error("degenerate regime: {0}")]
    DegenerateRegime(String),

    #[error("exact enumeration infeasible: {free_bits} free bits exceeds limit {limit}")]
    Infeasible { free_bits: usize, limit: usize },

    #[error("link success probabilities have no unique minimum")]
    NonUniqueMinimum,

    #[error("traffic does not match network config: {0}")]
    TrafficMismatch(String),

    #[error("sample size {trials} is below the floor {floor} for epsilon {epsilon}")]
    SampleSizeFloor {
        trials: usize,
        floor: usize,
        epsilon: f64,
    },

    #[error("parameter mismatch between estimate and bound: {0}")]
    ParameterMismatch(String),

    #[error("malformed traffic file: {0}")]
    Format(String),

    #[error("density was not tracked for this session")]
    DensityNotTracked,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
