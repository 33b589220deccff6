//! Crate-wide error type.

use alloc::string::String;
use alloc::vec::Vec;

/// Errors surfaced by graph calculus, assembly, and solvers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Argument outside the (closure of the) domain of a graph or potential.
    #[error("argument {value} outside domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    /// A scalar root bracket could not be resolved to tolerance.
    #[error("root solve did not converge after {iterations} iterations (gap {gap:.3e})")]
    Convergence { iterations: usize, gap: f64 },

    /// Adaptive quadrature failed to meet its tolerance.
    #[error("quadrature error estimate {achieved:.3e} exceeds tolerance {required:.3e}")]
    Quadrature { achieved: f64, required: f64 },

    /// A graph or potential declaration violates a structural invariant.
    #[error("invalid construction: {0}")]
    Construction(String),

    /// Field/grid size mismatch.
    #[error("shape mismatch: expected {expected} nodes, got {got}")]
    Shape { expected: usize, got: usize },

    /// An operation requiring declared metadata (singularity, growth) was
    /// called on a value that does not carry it.
    #[error("missing metadata: {0}")]
    MissingMetadata(&'static str),

    /// The inner Newton solver failed; carries the residual history.
    #[error("Newton diverged after {iterations} iterations (last residual {residual:.3e})")]
    NewtonDivergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    /// The stationary epsilon-ladder stagnated above tolerance.
    #[error("stationary ladder stagnated at residual {residual:.3e} (tolerance {tolerance:.3e})")]
    NonconvergedLadder { residual: f64, tolerance: f64 },

    /// Too few samples for a fit.
    #[error("insufficient data: need {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// An analysis precondition (operator kind, regime) is not met.
    #[error("precondition not met: {0}")]
    Precondition(String),

    /// The hypothesis of the discrete Gronwall lemma fails at some index.
    #[error("Gronwall hypothesis violated at m = {index}")]
    HypothesisViolated { index: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
