//! Reflected BSDE for node-frozen drivers: backward Snell induction with
//! the Mertens split of the reflection into a predictable part `A` (acting
//! on open intervals, against the obstacle's right limit) and an adapted
//! purely discontinuous part `C` (acting at the node's own value, as a
//! right jump). Also the brute-force two-sided stopping oracle.
//!
//! Backward step at a node `n` with children `c` and frozen driver `f(n)`:
//!
//! ```text
//! E_n       = E[Y.v(c) | n] + f(n) dt
//! A_incr(n) = (xi.vplus(n) - E_n)^+          Y.vplus(n) = max(xi.vplus(n), E_n)
//! C_jump(n) = (xi.v(n) - Y.vplus(n))^+       Y.v(n)     = max(xi.v(n), Y.vplus(n))
//! ```
//!
//! and `(Z, psi, M)` come from projecting the centered child values. The
//! Skorokhod residuals are zero by construction of the maxima; the oracle
//! below certifies the same values as suprema over all two-sided stopping
//! times, with drift collected up to the stopping point.
//!
//! Conventions baked in here and relied upon elsewhere:
//!
//! * the drift lump `f(n) dt` and `A_incr(n)` are assigned to the interval
//!   `(t_k, t_{k+1}]`, so the left limit at `t_{k+1}` is the parent's
//!   `vplus`;
//! * on a discrete grid the continuous part of `A` vanishes identically,
//!   so the continuous-part Skorokhod condition is vacuous and only the
//!   jump conditions are reported;
//! * at the horizon `Y = xi` forces `C_jump = 0` on leaves: no right jump
//!   of `C` at `T-` is admitted.

use crate::error::{Error, Result};
use crate::lattice::{Lattice, NodeId};
use crate::optional_process::{
    h2_norm_beta_values, lpi_norm_beta, m2_norm_beta, sup_norm_beta, NormReport, Obstacle,
    OptionalProcess,
};
use crate::representation::represent;

/// Enumeration guard for [`oracle_value`].
pub const POLICY_GUARD: u128 = 10_000;

/// Per-node decision of a two-sided stopping time. Stopping "right after"
/// a node collects the obstacle's right limit; this is what makes the
/// oracle see ladlag obstacles correctly at right discontinuities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Decision {
    StopAt,
    StopAfter,
    Continue,
}

/// Adapted stop/continue policy: one decision per node, first-stop
/// semantics along every path, leaves forced to stop at the terminal time.
#[derive(Debug, Clone)]
pub struct StoppingTime {
    pub from: NodeId,
    decisions: Vec<Decision>,
}

impl StoppingTime {
    /// Builds from per-node decisions (length = node count). Entries outside
    /// the subtree of `from` are ignored.
    pub fn new(from: NodeId, decisions: Vec<Decision>) -> Self {
        StoppingTime { from, decisions }
    }

    /// The policy that never stops before the horizon.
    pub fn at_terminal(lat: &Lattice, from: NodeId) -> Self {
        let mut decisions = vec![Decision::Continue; lat.node_count()];
        for leaf in lat.leaf_ids() {
            decisions[leaf.index()] = Decision::StopAt;
        }
        StoppingTime { from, decisions }
    }

    /// Effective decision at a node: leaves always stop at the node time.
    pub fn decision(&self, lat: &Lattice, id: NodeId) -> Decision {
        if lat.is_leaf(id) {
            Decision::StopAt
        } else {
            self.decisions[id.index()]
        }
    }

    /// Checks that every path from `from` reaches a stopping point.
    pub fn validate(&self, lat: &Lattice) -> Result<()> {
        let mut stack = vec![self.from];
        while let Some(id) = stack.pop() {
            match self.decision(lat, id) {
                Decision::StopAt | Decision::StopAfter => {}
                Decision::Continue => {
                    if lat.is_leaf(id) {
                        return Err(Error::InvalidStoppingTime(format!(
                            "leaf {id} does not stop"
                        )));
                    }
                    for b in &lat.node(id).branches {
                        stack.push(b.child);
                    }
                }
            }
        }
        Ok(())
    }

    /// P-weighted mean stopping time and the number of distinct stopping
    /// nodes, a compact summary for reports.
    pub fn summary(&self, lat: &Lattice) -> (f64, usize) {
        let mut mean = 0.0;
        let mut nodes = 0usize;
        let from_prob = lat.node_prob(self.from);
        let mut stack = vec![self.from];
        while let Some(id) = stack.pop() {
            match self.decision(lat, id) {
                Decision::StopAt | Decision::StopAfter => {
                    mean += lat.node_prob(id) / from_prob * lat.node_time(id);
                    nodes += 1;
                }
                Decision::Continue => {
                    for b in &lat.node(id).branches {
                        stack.push(b.child);
                    }
                }
            }
        }
        (mean, nodes)
    }
}

/// The sextuple solving the reflected equation on the lattice.
#[derive(Debug, Clone)]
pub struct RbsdeSolution {
    pub y: OptionalProcess,
    /// Brownian integrand per node (meaningful at internal nodes).
    pub z: Vec<f64>,
    /// Jump integrands per node and mark.
    pub psi: Vec<Vec<f64>>,
    /// Orthogonal martingale increment per node and branch.
    pub m_incr: Vec<Vec<f64>>,
    /// Increment of the predictable part over `(t_k, t_{k+1}]`,
    /// F_{t_k}-measurable and nonnegative.
    pub a_incr: Vec<f64>,
    /// Right jump of the adapted purely discontinuous part at `t_k`,
    /// `Y.v - Y.vplus >= 0`.
    pub c_jump: Vec<f64>,
}

impl RbsdeSolution {
    /// Solution-space norms: sup norm of `Y`, time-integral norm of `Z`,
    /// jump norm of `psi`, bracket norm of `M`.
    pub fn norm_report(&self, lat: &Lattice, beta: f64) -> NormReport {
        NormReport {
            beta,
            sup_norm_sq: sup_norm_beta(lat, &self.y, beta),
            h2_norm_sq: h2_norm_beta_values(lat, &self.z, beta),
            lpi_norm_sq: lpi_norm_beta(lat, &self.psi, beta),
            m2_norm_sq: m2_norm_beta(lat, &self.m_incr, beta),
        }
    }
}

/// Maxima of the Definition-style residuals. A well-formed solution keeps
/// every field at tolerance level.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SkorokhodReport {
    /// max over nodes of `(Y.vplus - xi.vplus) * A_incr`.
    pub a_residual: f64,
    /// max over nodes of `(Y.v - xi.v) * C_jump`.
    pub c_residual: f64,
    /// max over nodes and sides of `xi - Y` (positive = floor breached).
    pub floor_violation: f64,
    /// max over branchwise dynamics, right-jump reconstruction, terminal
    /// matching and nonnegativity of `A` and `C`.
    pub dynamics_residual: f64,
}

impl SkorokhodReport {
    pub fn max_residual(&self) -> f64 {
        self.a_residual
            .max(self.c_residual)
            .max(self.floor_violation)
            .max(self.dynamics_residual)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// Solves the reflected equation for a per-node frozen driver by backward
/// induction. All Skorokhod residuals vanish by construction.
pub fn solve_frozen(lat: &Lattice, f: &[f64], obstacle: &Obstacle) -> Result<RbsdeSolution> {
    assert_eq!(f.len(), lat.node_count(), "driver values are per node");
    let count = lat.node_count();
    let mut y = OptionalProcess::zeros(lat);
    let mut z = vec![0.0; count];
    let mut psi: Vec<Vec<f64>> = vec![Vec::new(); count];
    let mut m_incr: Vec<Vec<f64>> = vec![Vec::new(); count];
    let mut a_incr = vec![0.0; count];
    let mut c_jump = vec![0.0; count];

    for leaf in lat.leaf_ids() {
        let terminal = obstacle.v(leaf);
        y.set(leaf, terminal, terminal);
    }

    for level in (0..lat.num_steps()).rev() {
        let dt = lat.dt(level);
        for id in lat.nodes_at(level) {
            let child_values: Vec<f64> = lat
                .node(id)
                .branches
                .iter()
                .map(|b| y.v(b.child))
                .collect();
            let mean = lat.cond_expect(id, &child_values)?;
            let continuation = mean + f[id.index()] * dt;

            let a = (obstacle.vplus(id) - continuation).max(0.0);
            let vplus = obstacle.vplus(id).max(continuation);
            let c = (obstacle.v(id) - vplus).max(0.0);
            let v = obstacle.v(id).max(vplus);
            y.set(id, v, vplus);
            a_incr[id.index()] = a;
            c_jump[id.index()] = c;

            let increment: Vec<f64> = child_values.iter().map(|x| x - mean).collect();
            let rep = represent(lat, id, &increment)?;
            z[id.index()] = rep.z;
            psi[id.index()] = rep.psi;
            m_incr[id.index()] = rep.residual;
        }
    }

    Ok(RbsdeSolution {
        y,
        z,
        psi,
        m_incr,
        a_incr,
        c_jump,
    })
}

/// Number of two-sided stopping times on the subtree below `from`.
pub fn policy_count(lat: &Lattice, from: NodeId) -> u128 {
    if lat.is_leaf(from) {
        return 1;
    }
    let mut product: u128 = 1;
    for b in &lat.node(from).branches {
        product = product.saturating_mul(policy_count(lat, b.child));
    }
    product.saturating_add(2)
}

/// Brute-force value of the optimal stopping problem from `from`:
/// enumerates every two-sided stopping time on the subtree, computes
/// `E[xi at the stopped side + accumulated drift | from]` for each, and
/// returns the maximum. Independent of the backward recursion by design.
pub fn oracle_value(lat: &Lattice, f: &[f64], obstacle: &Obstacle, from: NodeId) -> Result<f64> {
    let count = policy_count(lat, from);
    if count > POLICY_GUARD {
        return Err(Error::TooManyPolicies {
            node: from,
            count,
            guard: POLICY_GUARD,
        });
    }
    let values = enumerate_policy_values(lat, f, obstacle, from);
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Conditional value of every stopping policy on the subtree of `node`.
fn enumerate_policy_values(
    lat: &Lattice,
    f: &[f64],
    obstacle: &Obstacle,
    node: NodeId,
) -> Vec<f64> {
    if lat.is_leaf(node) {
        return vec![obstacle.v(node)];
    }
    let branches = &lat.node(node).branches;
    let child_lists: Vec<Vec<f64>> = branches
        .iter()
        .map(|b| enumerate_policy_values(lat, f, obstacle, b.child))
        .collect();
    let drift = f[node.index()] * lat.dt(lat.time_index(node));

    let combos: usize = child_lists.iter().map(|l| l.len()).product();
    let mut values = Vec::with_capacity(2 + combos);
    values.push(obstacle.v(node));
    values.push(obstacle.vplus(node));
    // cartesian product over per-child policies
    let mut index = vec![0usize; child_lists.len()];
    for _ in 0..combos {
        let continuation: f64 = branches
            .iter()
            .zip(&child_lists)
            .zip(&index)
            .map(|((b, list), &i)| b.prob * list[i])
            .sum();
        values.push(drift + continuation);
        for pos in (0..index.len()).rev() {
            index[pos] += 1;
            if index[pos] < child_lists[pos].len() {
                break;
            }
            index[pos] = 0;
        }
    }
    values
}

/// Recomputes every checkable residual of a claimed solution.
pub fn check_solution(
    lat: &Lattice,
    f: &[f64],
    obstacle: &Obstacle,
    sol: &RbsdeSolution,
) -> SkorokhodReport {
    let mu = lat.marks().intensities();
    let mut a_residual: f64 = 0.0;
    let mut c_residual: f64 = 0.0;
    let mut floor_violation = f64::NEG_INFINITY;
    let mut dynamics: f64 = 0.0;

    for id in lat.node_ids() {
        floor_violation = floor_violation
            .max(obstacle.v(id) - sol.y.v(id))
            .max(obstacle.vplus(id) - sol.y.vplus(id));

        if lat.is_leaf(id) {
            dynamics = dynamics.max((sol.y.v(id) - obstacle.v(id)).abs());
            continue;
        }
        let i = id.index();
        let k = lat.time_index(id);
        let dt = lat.dt(k);

        a_residual = a_residual.max(((sol.y.vplus(id) - obstacle.vplus(id)) * sol.a_incr[i]).abs());
        c_residual = c_residual.max(((sol.y.v(id) - obstacle.v(id)) * sol.c_jump[i]).abs());
        dynamics = dynamics
            .max((sol.y.v(id) - sol.y.vplus(id) - sol.c_jump[i]).abs())
            .max((-sol.a_incr[i]).max(0.0))
            .max((-sol.c_jump[i]).max(0.0));

        for (b, branch) in lat.node(id).branches.iter().enumerate() {
            let mut noise = sol.z[i] * branch.dw;
            for (u, &mu_u) in mu.iter().enumerate() {
                let x = if branch.mark == Some(u) { 1.0 } else { 0.0 } - mu_u * dt;
                noise += sol.psi[i][u] * x;
            }
            noise += sol.m_incr[i][b];
            let predicted = sol.y.vplus(id) - f[i] * dt - sol.a_incr[i] + noise;
            dynamics = dynamics.max((sol.y.v(branch.child) - predicted).abs());
        }
    }

    SkorokhodReport {
        a_residual,
        c_residual,
        floor_violation,
        dynamics_residual: dynamics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::optional_process::make_obstacle;

    fn binary(n: usize) -> Lattice {
        Lattice::build(&LatticeSpec::binary(n, 1.0)).unwrap()
    }

    /// The N=1 instance with a genuine right discontinuity at the root:
    /// terminal 1 on both leaves, xi.v(root) = 2, xi.vplus(root) = 0.
    fn right_jump_instance(lat: &Lattice) -> Obstacle {
        make_obstacle(
            lat,
            |id| if id.index() == 0 { (2.0, 0.0) } else { (1.0, 1.0) },
            |_| 1.0,
        )
    }

    #[test]
    fn constant_obstacle_gives_constant_solution() {
        let lat = binary(3);
        let ob = make_obstacle(&lat, |_| (0.7, 0.7), |_| 0.7);
        let f = vec![0.0; lat.node_count()];
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        for id in lat.node_ids() {
            assert_eq!(sol.y.v(id), 0.7);
            assert_eq!(sol.y.vplus(id), 0.7);
            assert_eq!(sol.a_incr[id.index()], 0.0);
            assert_eq!(sol.c_jump[id.index()], 0.0);
        }
        assert!(sol.z.iter().all(|z| z.abs() < 1e-15));
        assert!(sol
            .m_incr
            .iter()
            .flatten()
            .all(|m| m.abs() < 1e-15));
    }

    #[test]
    fn right_jump_collected_by_c() {
        let lat = binary(1);
        let ob = right_jump_instance(&lat);
        let f = vec![0.0; lat.node_count()];
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        let root = lat.root();
        // E = 1, A = (0 - 1)^+ = 0, Y.vplus = max(0, 1) = 1,
        // C = (2 - 1)^+ = 1, Y.v = 2.
        assert_eq!(sol.a_incr[root.index()], 0.0);
        assert_eq!(sol.y.vplus(root), 1.0);
        assert_eq!(sol.c_jump[root.index()], 1.0);
        assert_eq!(sol.y.v(root), 2.0);

        // the three stopping policies: stop at 0 -> 2, right after 0 -> 0,
        // at T -> 1; the oracle takes the max
        assert_eq!(oracle_value(&lat, &f, &ob, root).unwrap(), 2.0);
    }

    #[test]
    fn drift_fills_the_right_jump() {
        let lat = binary(1);
        let ob = right_jump_instance(&lat);
        let f = vec![1.0; lat.node_count()];
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        let root = lat.root();
        // E = 1 + 1 = 2, Y.vplus = 2, Y.v = max(2, 2) = 2, C = 0.
        assert_eq!(sol.y.vplus(root), 2.0);
        assert_eq!(sol.c_jump[root.index()], 0.0);
        assert_eq!(sol.y.v(root), 2.0);
    }

    #[test]
    fn oracle_prefers_stopping_when_continuation_ties() {
        // leaves {3, -1}, xi(root) = (1, 1), f = 0: continuation value is 1
        // and stopping now is 1; the oracle returns 1.
        let lat = binary(1);
        let mut leaf_vals = vec![3.0, -1.0].into_iter();
        let ob = make_obstacle(
            &lat,
            |id| if id.index() == 0 { (1.0, 1.0) } else { (0.0, 0.0) },
            |_| leaf_vals.next().unwrap(),
        );
        let f = vec![0.0; lat.node_count()];
        assert_eq!(oracle_value(&lat, &f, &ob, lat.root()).unwrap(), 1.0);
    }

    #[test]
    fn oracle_constant_obstacle() {
        let lat = binary(2);
        let ob = make_obstacle(&lat, |_| (0.3, 0.3), |_| 0.3);
        let f = vec![0.0; lat.node_count()];
        assert!((oracle_value(&lat, &f, &ob, lat.root()).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn policy_counts() {
        assert_eq!(policy_count(&binary(1), NodeId(0)), 3);
        assert_eq!(policy_count(&binary(2), NodeId(0)), 11);
        assert_eq!(policy_count(&binary(3), NodeId(0)), 123);
    }

    #[test]
    fn guard_rejects_large_subtrees() {
        let lat = binary(5); // root subtree carries ~2.3e8 policies
        assert!(matches!(
            oracle_value(
                &lat,
                &vec![0.0; lat.node_count()],
                &make_obstacle(&lat, |_| (0.0, 0.0), |_| 0.0),
                lat.root()
            ),
            Err(Error::TooManyPolicies { .. })
        ));
    }

    #[test]
    fn check_solution_passes_and_catches_corruption() {
        let lat = binary(2);
        let ob = make_obstacle(
            &lat,
            |id| {
                let t = lat.time_index(id) as f64;
                (1.0 - 0.3 * t, 0.8 - 0.3 * t)
            },
            |id| if id.index() % 2 == 0 { 1.2 } else { -0.4 },
        );
        let f: Vec<f64> = (0..lat.node_count()).map(|i| 0.1 * (i as f64 - 3.0)).collect();
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        let report = check_solution(&lat, &f, &ob, &sol);
        assert!(report.within(1e-12), "{report:?}");

        // hand-corrupted A at the root must surface
        let mut bad = sol.clone();
        bad.a_incr[0] += 0.5;
        let report = check_solution(&lat, &f, &ob, &bad);
        assert!(
            report.dynamics_residual > 1e-6 || report.a_residual > 1e-6,
            "{report:?}"
        );
    }

    #[test]
    fn snell_matches_oracle_on_small_trees() {
        // Eq.-style identity, literally: Y.v(S) equals the enumeration
        // supremum at every node of a lattice with a right-jump obstacle.
        let lat = binary(3);
        let ob = make_obstacle(
            &lat,
            |id| {
                let i = id.index() as f64;
                let v = (i * 0.37).sin();
                (v, v - 0.2 * ((i * 0.61).cos().abs()))
            },
            |id| (id.index() as f64 * 0.29).cos(),
        );
        let f: Vec<f64> = (0..lat.node_count())
            .map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.15)
            .collect();
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        for id in lat.node_ids() {
            let oracle = oracle_value(&lat, &f, &ob, id).unwrap();
            assert!(
                (sol.y.v(id) - oracle).abs() <= 1e-12,
                "node {id}: snell {} vs oracle {}",
                sol.y.v(id),
                oracle
            );
        }
    }

    #[test]
    fn supermartingale_and_slackness() {
        let lat = binary(3);
        let ob = make_obstacle(
            &lat,
            |id| {
                let i = id.index() as f64;
                ((i * 0.53).cos(), (i * 0.53).cos() - 0.1)
            },
            |id| (id.index() as f64 * 0.41).sin(),
        );
        let f: Vec<f64> = (0..lat.node_count()).map(|i| 0.05 * ((i % 3) as f64 - 1.0)).collect();
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        for id in lat.internal_ids() {
            let i = id.index();
            let child_values: Vec<f64> = lat
                .node(id)
                .branches
                .iter()
                .map(|b| sol.y.v(b.child))
                .collect();
            let e = lat.cond_expect(id, &child_values).unwrap()
                + f[i] * lat.dt(lat.time_index(id));
            // E[Y.v(child) | n] + f dt <= Y.vplus <= Y.v
            assert!(e <= sol.y.vplus(id) + 1e-12);
            assert!(sol.y.vplus(id) <= sol.y.v(id) + 1e-12);
            // complementary slackness, exact
            if sol.a_incr[i] > 0.0 {
                assert_eq!(sol.y.vplus(id), ob.vplus(id));
            }
            if sol.c_jump[i] > 0.0 {
                assert_eq!(sol.y.v(id), ob.v(id));
            }
        }
    }

    #[test]
    fn monotone_in_obstacle_and_driver() {
        let lat = binary(3);
        let base = |id: NodeId| (id.index() as f64 * 0.23).sin();
        let ob1 = make_obstacle(&lat, |id| (base(id), base(id) - 0.1), |id| base(id));
        let ob2 = make_obstacle(
            &lat,
            |id| (base(id) + 0.3, base(id) - 0.1 + 0.3),
            |id| base(id) + 0.3,
        );
        let f1: Vec<f64> = (0..lat.node_count()).map(|i| 0.1 * ((i % 4) as f64 - 2.0)).collect();
        let f2: Vec<f64> = f1.iter().map(|x| x + 0.2).collect();

        let s11 = solve_frozen(&lat, &f1, &ob1).unwrap();
        let s12 = solve_frozen(&lat, &f1, &ob2).unwrap();
        let s21 = solve_frozen(&lat, &f2, &ob1).unwrap();
        for id in lat.node_ids() {
            assert!(s11.y.v(id) <= s12.y.v(id) + 1e-12, "monotone in obstacle");
            assert!(s11.y.v(id) <= s21.y.v(id) + 1e-12, "monotone in driver");
        }
    }

    #[test]
    fn stopping_time_validation() {
        let lat = binary(2);
        let tau = StoppingTime::at_terminal(&lat, lat.root());
        tau.validate(&lat).unwrap();
        let (mean, nodes) = tau.summary(&lat);
        assert_eq!(mean, 1.0);
        assert_eq!(nodes, 4);
    }
}
