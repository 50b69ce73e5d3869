use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while building grids, stepping the
/// schemes, or reading and writing run artifacts.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid field data: {0}")]
    InvalidField(String),

    /// The source of a periodic Poisson problem does not integrate to zero.
    #[error("compatibility violated: mean {mean:e} exceeds 1e-10 * max |f| = {bound:e}")]
    Compatibility { mean: f64, bound: f64 },

    #[error("phase masses differ: {left} vs {right} cells")]
    MassMismatch { left: usize, right: usize },

    /// The Lagrange multiplier denominator fell below the detection floor.
    #[error("degenerate phase: |∫χ div ξ| = {denominator:e} below floor")]
    DegeneratePhase { denominator: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("interface width {eps} is below 3 dx = {min}")]
    Resolution { eps: f64, min: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("step {step}: energy inequality violated ({what}: lhs {lhs:.17e} > rhs {rhs:.17e})")]
    LedgerViolation {
        step: usize,
        what: &'static str,
        lhs: f64,
        rhs: f64,
    },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        match self {
            e @ (Error::LedgerViolation { .. } | Error::AtStep { .. }) => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, looking through step annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
