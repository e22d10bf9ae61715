//! Error types shared across the crate.

use crate::lattice::NodeId;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The lattice specification cannot produce a valid tree.
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),

    /// A per-branch value vector does not cover every branch of a node.
    #[error("node {node} has {expected} branches but {got} values were supplied")]
    MissingBranchValue {
        node: NodeId,
        expected: usize,
        got: usize,
    },

    /// A mark index outside the lattice's mark space.
    #[error("unknown mark index {index} (mark space has {len} marks)")]
    UnknownMark { index: usize, len: usize },

    /// The regressors of a one-step representation are linearly dependent
    /// under the node's branch measure.
    #[error("singular Gram matrix at node {node}: regressor '{regressor}' is dependent")]
    SingularGram { node: NodeId, regressor: String },

    /// A martingale increment handed to `represent` is not centered.
    #[error("increment at node {node} is not centered: |E[increment]| = {mean:e}")]
    NotCentered { node: NodeId, mean: f64 },

    /// Brute-force stopping-time enumeration would exceed the guard.
    #[error("subtree below {node} carries {count} stopping policies (guard: {guard})")]
    TooManyPolicies {
        node: NodeId,
        count: u128,
        guard: u128,
    },

    /// Picard iteration hit `max_iter` with the distance still above `tol`.
    #[error("no convergence after {iterations} iterations; last distance {last_distance:e} > tol {tol:e}")]
    NoConvergence {
        iterations: usize,
        last_distance: f64,
        tol: f64,
    },

    /// The constant-free a-priori estimate failed; this signals a solver bug.
    #[error("a-priori estimate violated: lhs {lhs:e} > rhs {rhs:e}")]
    EstimateViolated { lhs: f64, rhs: f64 },

    /// Penalized solutions failed to be monotone in the penalty level.
    #[error("penalization monotonicity violated: {0}")]
    MonotonicityViolated(String),

    /// The implicit per-node solve of the nonreflected BSDE needs K*dt < 1/2.
    #[error("time step too coarse for implicit solve: K*dt = {product} >= 0.5")]
    StepTooCoarse { product: f64 },

    /// A stopping time that does not stop on every path of the subtree.
    #[error("invalid stopping time: {0}")]
    InvalidStoppingTime(String),

    /// The obstacle violates the discrete left-upper-semicontinuity surrogate,
    /// so hitting-time optimality is not claimed.
    #[error("l.u.s.c. surrogate violated at node {node}: left limit {left_limit} > value {value}")]
    LuscViolated {
        node: NodeId,
        left_limit: f64,
        value: f64,
    },

    /// Walking a decomposition did not reproduce the associated process.
    #[error("decomposition does not reconstruct the process: residual {residual:e} at node {node}")]
    ReconstructionFailed { node: NodeId, residual: f64 },

    /// The change-of-variables identity failed on some path.
    #[error("change-of-variables identity violated at node {node}: |lhs - rhs| = {residual:e}")]
    FormulaViolated { node: NodeId, residual: f64 },

    /// Experiment configuration rejected.
    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
