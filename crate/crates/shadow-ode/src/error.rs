//! Error types shared across the crate.

use thiserror::Error;

/// Failure while parsing an expression or vector field.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    /// Unexpected token or character. `offset` is a 0-based byte offset into the input.
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },

    /// An identifier that is neither a declared variable, a constant, nor a function.
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    /// A known function called with the wrong number of arguments.
    #[error("function `{function}` at byte {offset} takes {expected} argument(s), got {got}")]
    ArityMismatch {
        function: &'static str,
        offset: usize,
        expected: usize,
        got: usize,
    },

    /// Component count of a vector field does not match the requested dimension.
    #[error("dimension mismatch: expected {expected} component(s), got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A function was evaluated outside its real domain (log of a non-positive
/// number, square root of a negative, negative base raised to a fractional
/// power). Overflow to infinity is *not* a domain error; it is reported as an
/// explicit [`EvalStatus::Overflow`](crate::expr::EvalStatus) signal instead.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("domain error: {function}({argument}) is outside the real domain")]
pub struct DomainError {
    pub function: &'static str,
    pub argument: f64,
}

/// Failures of the numerical pipeline operations.
#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("domain error{} : {source}", step.map(|k| format!(" at step {k}")).unwrap_or_default())]
    Domain {
        /// Grid index (or query abscissa cast to a step) at which evaluation failed.
        step: Option<u64>,
        source: DomainError,
    },

    #[error("quadrature did not converge: N reached {max_n}, last delta {last_delta:e}")]
    NoConvergence { max_n: u64, last_delta: f64 },

    #[error("refinement ladder has {levels} level(s); at least {required} required")]
    InsufficientLadder { levels: usize, required: usize },

    #[error("query at the origin did not converge; check grid and perturbation configuration")]
    OriginDiverged,

    #[error("too few converged queries for an order estimate: {converged} < {required}")]
    TooFewSamples { converged: usize, required: usize },

    #[error("perturbation recovery supports scalar problems only (dim = {dim})")]
    SystemsUnsupported { dim: usize },

    #[error("no mean-value abscissa bracketed at step {step} (residual {residual:e})")]
    NoMeanValuePoint { step: u64, residual: f64 },

    #[error("known solution fails the sanity gate at x = {x}: |y' - F(x,y)| = {deviation:e}")]
    KnownSolutionMismatch { x: f64, deviation: f64 },

    #[error("epsilon ladder is not monotone at x = {x}: violation {violation:e} exceeds 3*tol")]
    LadderNonMonotone { x: f64, violation: f64 },

    #[error("anchor index {anchor} is not below the trajectory stop index {k_stop}")]
    AnchorOutOfRange { anchor: u64, k_stop: u64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl SolverError {
    pub(crate) fn domain(step: Option<u64>, source: DomainError) -> Self {
        SolverError::Domain { step, source }
    }
}
