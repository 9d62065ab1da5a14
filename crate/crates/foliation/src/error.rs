//! Error type shared by all numerical routines.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received data violating its representation
    /// invariants (grid mismatch, bad index, wrong series length, ...).
    #[error("invalid representation: {0}")]
    InvalidInput(String),

    /// A circle map expected to be an orientation-preserving diffeomorphism
    /// is not monotone on the grid.
    #[error("circle map is not monotone: {0}")]
    NotMonotone(String),

    /// Pointwise division hit a value below the degeneracy threshold.
    #[error("division degenerate: |denominator| = {min_abs:.3e} at θ = {theta:.6}")]
    DivisionDegenerate { theta: f64, min_abs: f64 },

    /// The transfer-operator doubling ran out of passes before reaching the
    /// requested residual.
    #[error("cohomological solve did not converge: residual {achieved:.3e} after {passes} doubling passes (tolerance {tolerance:.3e})")]
    CohoNoConvergence {
        achieved: f64,
        passes: usize,
        tolerance: f64,
    },

    /// Neither the forward nor the reversed cohomological equation contracts;
    /// the cocycle average sits at the resonance boundary.
    #[error("near-resonant cohomological equation: forward average {forward:.6}, reversed average {reversed:.6}")]
    Resonance { forward: f64, reversed: f64 },

    /// The frame `DW` composed with the internal dynamics became singular;
    /// this is the numerical signature of tangent/stable bundle collapse.
    #[error("frame degenerate: |det DW∘(a,λs)| = {min_abs:.3e} at θ = {theta:.6}")]
    FrameDegenerate { theta: f64, min_abs: f64 },

    /// The Newton iteration diverged or stopped making progress.
    #[error("invariance solve failed: {reason} (last residual {residual:.3e} after {iterations} iterations)")]
    SolveFailed {
        reason: String,
        residual: f64,
        iterations: usize,
    },

    /// Continuation could not advance: the step size underflowed its floor.
    #[error("continuation stalled at parameter {at:.12}: step {step:.3e} below floor {floor:.3e}")]
    StepUnderflow { at: f64, step: f64, floor: f64 },

    /// Root bracketing or iteration failure in a scalar solve.
    #[error("scalar root solve failed: {0}")]
    RootFind(String),

    /// A periodic-orbit Newton solve did not converge.
    #[error("periodic orbit search failed: {0}")]
    OrbitNotFound(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("checkpoint malformed: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
