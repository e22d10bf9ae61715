//! Numerical laboratory for reflected backward stochastic differential
//! equations whose lower obstacle is ladlag (finite left and right limits,
//! possibly distinct value and right limit) and right upper-semicontinuous
//! rather than right-continuous, in a filtration carrying both a Brownian
//! motion and an independent Poisson random measure.
//!
//! Everything lives on a finite non-recombining scenario lattice, where
//! conditional expectations are exact sums and every identity of the
//! continuous theory has a checkable discrete shadow:
//!
//! * [`lattice`] — the discrete stochastic basis: tree, branch
//!   probabilities, Brownian increments, jump marks with compensator.
//! * [`optional_process`] — ladlag processes as (value, right-limit) pairs,
//!   obstacles, and the exponentially weighted norms.
//! * [`representation`] — per-node martingale representation with an
//!   orthogonal residual.
//! * [`snell`] — backward Snell induction for node-frozen drivers, the
//!   Mertens split of the reflection into predictable (`A`) and purely
//!   discontinuous (`C`) parts, and a brute-force two-sided stopping
//!   oracle.
//! * [`picard`] — fixed-point iteration for Lipschitz drivers
//!   `f(t, y, z, psi)` with contraction diagnostics and the constant-free
//!   a-priori estimate checker.
//! * [`penalization`] — two-stage penalized approximation with
//!   monotone-convergence diagnostics.
//! * [`stopping`] — nonlinear (driver-weighted) expectations, epsilon-optimal
//!   and hitting-time stopping rules, and the induced dynamic risk measure.
//! * [`gl_formula`] — exact pathwise verification of the change-of-variables
//!   formula for ladlag semimartingale decompositions.
//! * [`config`] / [`runner`] — declarative experiment configs and the
//!   batch runner behind the `rbsde` binary.
//! * [`instances`] — seeded random problem instances for sweeps and tests.
//!
//! Each major capability has a runnable demo under `examples/`.

pub mod config;
pub mod error;
pub mod gl_formula;
pub mod instances;
pub mod lattice;
pub mod optional_process;
pub mod penalization;
pub mod picard;
pub mod representation;
pub mod runner;
pub mod snell;
pub mod stopping;

pub use error::{Error, Result};
pub use lattice::{build_lattice, Lattice, LatticeSpec, Mark, MarkSpace, NodeId};
pub use optional_process::{
    h2_norm_beta, lpi_norm_beta, m2_norm_beta, make_obstacle, sup_norm_beta, NormReport,
    Obstacle, OptionalProcess,
};
pub use picard::{apriori_check, AprioriReport, Driver, PicardDiagnostics};
pub use representation::{represent, NodeRepresentation};
pub use snell::{
    check_solution, oracle_value, solve_frozen, Decision, RbsdeSolution, SkorokhodReport,
    StoppingTime,
};
