use thiserror::Error;

use crate::spectral::Repr;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field representation mismatch: expected {expected:?}, found {found:?}")]
    ReprMismatch { expected: Repr, found: Repr },

    #[error("fields live on different grids")]
    GridMismatch,

    /// The scalar update for the auxiliary variable has a (near) zero
    /// denominator. Happens only when the step size is too large.
    #[error("degenerate auxiliary-variable update: |4 - tau*b2| = {denominator:e} below 1e-10; reduce tau")]
    SolveDegenerate { denominator: f64 },

    #[error("singular stage system: pivot {pivot:e} below 1e-12 x scale {scale:e}; reduce tau")]
    SingularStageSystem { pivot: f64, scale: f64 },

    #[error("non-finite values produced in {stage}")]
    NonFinite { stage: &'static str },

    #[error("unsupported stage count {0}; built-in Gauss tableaus exist for s = 2 and s = 3")]
    UnsupportedStages(usize),

    #[error("invalid Butcher tableau: {0}")]
    InvalidTableau(String),

    #[error("step {step}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<R, E = Error> = std::result::Result<R, E>;
