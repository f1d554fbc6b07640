use crate::C64;
use thiserror::Error;

/// Errors raised anywhere in the pole placement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("polynomial is identically zero")]
    ZeroPolynomial,

    #[error("root iteration stalled after {sweeps} sweeps (max residual {max_residual:.3e})")]
    NoConvergence {
        sweeps: usize,
        max_residual: f64,
        best: Vec<C64>,
        residuals: Vec<f64>,
    },

    #[error("interpolation nodes {0} and {1} coincide")]
    DuplicateNode(usize, usize),

    #[error("root pairing is not stable under tolerance perturbation ({matched_low} vs {matched_high} pairs)")]
    MatchingAmbiguity {
        matched_low: usize,
        matched_high: usize,
    },

    #[error("gcd failed while reducing entry ({row}, {col}): {source}")]
    GcdFailure {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("polynomial matrix is singular (invariant factor {0} vanishes)")]
    SingularMatrix(usize),

    #[error("s = {0} is a pole of the plant (sI - A numerically singular)")]
    PoleOfPlant(C64),

    #[error("s = {0} is a pole of the compensator (sI - F numerically singular)")]
    PoleOfCompensator(C64),

    #[error("problem is overdetermined (excess {excess}); use q = {suggested_q}")]
    OverdeterminedProblem { excess: usize, suggested_q: usize },

    #[error("poles {0} and {1} coincide")]
    DuplicatePoles(usize, usize),

    #[error("wrong number of poles: expected {expected}, got {got}")]
    PoleCount { expected: usize, got: usize },

    #[error("highest column degree coefficient matrix is singular (|det| = {0:.3e}); column-reduce D first")]
    SingularDh(f64),

    #[error("transfer function is not proper (column {0})")]
    NotProper(usize),

    #[error("realization coefficient matching left residual {0:.3e}")]
    InconsistentRealization(f64),

    #[error("probe point {0} hits a pole")]
    ProbeSingular(C64),

    #[error("eigenvalue {0} is defective (|y^H x| too small)")]
    InfiniteCondition(C64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
