//! Optimal stopping and the induced dynamic risk measure.
//!
//! The driver-weighted (nonlinear) expectation of a stopped payoff solves
//! the nonreflected equation backward from the stopping frontier: stopping
//! at a node collects the obstacle's value, stopping right after it
//! collects the right limit, and continuation nodes solve the implicit
//! scalar equation `y = E[next] + f(t, y, z, psi) dt` with `(z, psi)`
//! projected from the next values. The fixed-point solve needs
//! `K dt < 1/2`, enforced up front.
//!
//! On top of that sit the two stopping rules: the epsilon-rule stops the
//! first time `Y <= xi + eps` on either side, and the hitting rule stops
//! the first time `Y = xi` exactly. The hitting rule only claims
//! optimality when the obstacle passes the discrete surrogate of
//! left-upper-semicontinuity (no node sits strictly below the left limit
//! coming in from its parent); otherwise it refuses rather than claim an
//! unsupported identity. The risk measure is the sign flip `v = -Y`.

use crate::error::{Error, Result};
use crate::lattice::{Lattice, NodeId};
use crate::optional_process::Obstacle;
use crate::picard::{self, Driver};
use crate::representation::represent;
use crate::snell::{Decision, RbsdeSolution, StoppingTime};

/// Absolute tolerance of the implicit scalar solves.
pub const SCALAR_TOL: f64 = 1e-13;
/// Exact-hit tolerance of the hitting rule.
pub const HIT_TOL: f64 = 1e-12;

/// A computed driver-weighted expectation of a stopped payoff.
#[derive(Debug, Clone)]
pub struct FExpectation {
    pub driver: Driver,
    pub from: NodeId,
    pub tau: StoppingTime,
    pub value: f64,
}

/// Driver-weighted expectation of the obstacle stopped at `tau`, evaluated
/// at `s`: solves the nonreflected equation backward from the frontier.
pub fn f_expectation(
    lat: &Lattice,
    driver: &Driver,
    obstacle: &Obstacle,
    s: NodeId,
    tau: &StoppingTime,
) -> Result<f64> {
    let max_dt = (0..lat.num_steps()).map(|k| lat.dt(k)).fold(0.0, f64::max);
    let product = driver.lipschitz_k * max_dt;
    if product >= 0.5 {
        return Err(Error::StepTooCoarse { product });
    }
    tau.validate(lat)?;
    backward_value(lat, driver, obstacle, s, tau)
}

fn backward_value(
    lat: &Lattice,
    driver: &Driver,
    obstacle: &Obstacle,
    node: NodeId,
    tau: &StoppingTime,
) -> Result<f64> {
    match tau.decision(lat, node) {
        Decision::StopAt => Ok(obstacle.v(node)),
        Decision::StopAfter => Ok(obstacle.vplus(node)),
        Decision::Continue => {
            let children: Vec<f64> = lat
                .node(node)
                .branches
                .iter()
                .map(|b| backward_value(lat, driver, obstacle, b.child, tau))
                .collect::<Result<_>>()?;
            let mean = lat.cond_expect(node, &children)?;
            let increment: Vec<f64> = children.iter().map(|x| x - mean).collect();
            let rep = represent(lat, node, &increment)?;
            let t = lat.node_time(node);
            let dt = lat.dt(lat.time_index(node));
            // scalar fixed point y = mean + f(t, y, z, psi) dt
            let mut y = mean;
            for _ in 0..200 {
                let next = mean + driver.eval(t, y, rep.z, &rep.psi) * dt;
                if (next - y).abs() <= SCALAR_TOL {
                    return Ok(next);
                }
                y = next;
            }
            Ok(y)
        }
    }
}

/// First time `Y <= xi + eps`, checking the node value before the right
/// limit. Exists on every path because `Y = xi` at the horizon.
pub fn epsilon_optimal_time(
    lat: &Lattice,
    sol: &RbsdeSolution,
    obstacle: &Obstacle,
    s: NodeId,
    epsilon: f64,
) -> StoppingTime {
    let decisions = lat
        .node_ids()
        .map(|id| {
            if sol.y.v(id) <= obstacle.v(id) + epsilon {
                Decision::StopAt
            } else if sol.y.vplus(id) <= obstacle.vplus(id) + epsilon {
                Decision::StopAfter
            } else {
                Decision::Continue
            }
        })
        .collect();
    StoppingTime::new(s, decisions)
}

/// Outcome of one epsilon-optimality check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpsilonOptimalityReport {
    pub s: NodeId,
    pub epsilon: f64,
    pub y_s: f64,
    pub stopped_value: f64,
    /// `Y_S` minus the stopped evaluation; at most `epsilon` exactly when
    /// the driver vanishes.
    pub gap: f64,
    /// `gap / epsilon`, the empirical constant.
    pub empirical_c: f64,
    /// Mean stopping time and number of stopping nodes of the rule.
    pub tau_mean_time: f64,
    pub tau_stop_nodes: usize,
}

/// Computes the epsilon-rule gap for a precomputed solution.
pub fn check_epsilon_optimality_with(
    lat: &Lattice,
    driver: &Driver,
    obstacle: &Obstacle,
    sol: &RbsdeSolution,
    s: NodeId,
    epsilon: f64,
) -> Result<EpsilonOptimalityReport> {
    let tau = epsilon_optimal_time(lat, sol, obstacle, s, epsilon);
    let stopped_value = f_expectation(lat, driver, obstacle, s, &tau)?;
    let y_s = sol.y.v(s);
    let gap = y_s - stopped_value;
    let (tau_mean_time, tau_stop_nodes) = tau.summary(lat);
    Ok(EpsilonOptimalityReport {
        s,
        epsilon,
        y_s,
        stopped_value,
        gap,
        empirical_c: gap / epsilon,
        tau_mean_time,
        tau_stop_nodes,
    })
}

/// Solves the reflected equation for `driver` and checks the epsilon rule
/// at `s`. Convenience wrapper around [`check_epsilon_optimality_with`].
pub fn check_epsilon_optimality(
    lat: &Lattice,
    driver: &Driver,
    obstacle: &Obstacle,
    s: NodeId,
    epsilon: f64,
) -> Result<EpsilonOptimalityReport> {
    let beta = 4.0 * (1.0 + driver.lipschitz_k * driver.lipschitz_k);
    let (sol, _) = picard::solve(lat, driver, obstacle, beta, 1e-22, 400)?;
    check_epsilon_optimality_with(lat, driver, obstacle, &sol, s, epsilon)
}

/// Outcome of the hitting-rule check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OptimalityReport {
    pub s: NodeId,
    pub y_s: f64,
    pub stopped_value: f64,
    pub gap: f64,
    pub tau_mean_time: f64,
    pub tau_stop_nodes: usize,
}

/// First hitting time of `Y = xi` from `s`, with the optimality identity
/// `Y_S = stopped evaluation`. Refuses when the obstacle violates the
/// discrete left-upper-semicontinuity surrogate on the subtree.
pub fn optimal_time_lusc(
    lat: &Lattice,
    driver: &Driver,
    sol: &RbsdeSolution,
    obstacle: &Obstacle,
    s: NodeId,
) -> Result<(StoppingTime, OptimalityReport)> {
    // gate: no upward approach from the left may exceed the node value
    let mut stack = vec![s];
    while let Some(id) = stack.pop() {
        for b in &lat.node(id).branches {
            let left_limit = obstacle.vplus(id);
            let value = obstacle.v(b.child);
            if left_limit > value + HIT_TOL {
                return Err(Error::LuscViolated {
                    node: b.child,
                    left_limit,
                    value,
                });
            }
            stack.push(b.child);
        }
    }

    let decisions = lat
        .node_ids()
        .map(|id| {
            if (sol.y.v(id) - obstacle.v(id)).abs() <= HIT_TOL {
                Decision::StopAt
            } else if (sol.y.vplus(id) - obstacle.vplus(id)).abs() <= HIT_TOL {
                Decision::StopAfter
            } else {
                Decision::Continue
            }
        })
        .collect();
    let tau = StoppingTime::new(s, decisions);
    let stopped_value = f_expectation(lat, driver, obstacle, s, &tau)?;
    let y_s = sol.y.v(s);
    let (tau_mean_time, tau_stop_nodes) = tau.summary(lat);
    Ok((
        tau,
        OptimalityReport {
            s,
            y_s,
            stopped_value,
            gap: y_s - stopped_value,
            tau_mean_time,
            tau_stop_nodes,
        },
    ))
}

/// The dynamic risk measure induced by a driver: `v = -Y` nodewise.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RiskReport {
    /// `-Y.v` per node.
    pub v: Vec<f64>,
}

/// Risk of the position with payoff `xi` under `driver`, from the full
/// reflected solve.
pub fn risk_measure(
    lat: &Lattice,
    driver: &Driver,
    obstacle: &Obstacle,
    beta: f64,
) -> Result<RiskReport> {
    let (sol, _) = picard::solve(lat, driver, obstacle, beta, 1e-18, 400)?;
    Ok(risk_of(lat, &sol))
}

/// Risk report of an already-solved instance.
pub fn risk_of(lat: &Lattice, sol: &RbsdeSolution) -> RiskReport {
    RiskReport {
        v: lat.node_ids().map(|id| -sol.y.v(id)).collect(),
    }
}

/// Paired-obstacle monotonicity check: a pointwise larger payoff must
/// carry pointwise smaller risk.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PairedRiskReport {
    pub risk_lo: RiskReport,
    pub risk_hi: RiskReport,
    /// Nodes where `xi1 <= xi2` but `v1 < v2`.
    pub violations: Vec<NodeId>,
    pub max_violation: f64,
}

/// Compares the risks of two frozen-driver positions with `xi1 <= xi2`.
pub fn risk_measure_paired_frozen(
    lat: &Lattice,
    f: &[f64],
    lower: &Obstacle,
    higher: &Obstacle,
) -> Result<PairedRiskReport> {
    let s1 = crate::snell::solve_frozen(lat, f, lower)?;
    let s2 = crate::snell::solve_frozen(lat, f, higher)?;
    let risk_lo = risk_of(lat, &s1);
    let risk_hi = risk_of(lat, &s2);
    let mut violations = Vec::new();
    let mut max_violation: f64 = 0.0;
    for id in lat.node_ids() {
        let gap = risk_hi.v[id.index()] - risk_lo.v[id.index()];
        if gap > 1e-12 {
            violations.push(id);
            max_violation = max_violation.max(gap);
        }
    }
    Ok(PairedRiskReport {
        risk_lo,
        risk_hi,
        violations,
        max_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Lattice, LatticeSpec};
    use crate::optional_process::make_obstacle;
    use crate::snell::solve_frozen;

    fn binary(n: usize) -> Lattice {
        Lattice::build(&LatticeSpec::binary(n, 1.0)).unwrap()
    }

    fn wavy_obstacle(lat: &Lattice) -> Obstacle {
        make_obstacle(
            lat,
            |id| {
                let x = (id.index() as f64 * 0.31).sin() * 0.7;
                (x, x - 0.1)
            },
            |id| (id.index() as f64 * 0.23).cos() * 0.7,
        )
    }

    #[test]
    fn zero_driver_terminal_stop_is_plain_expectation() {
        let lat = binary(2);
        let ob = wavy_obstacle(&lat);
        let tau = StoppingTime::at_terminal(&lat, lat.root());
        let value = f_expectation(&lat, &Driver::zero(), &ob, lat.root(), &tau).unwrap();
        let direct: f64 = lat.leaf_ids().map(|id| lat.node_prob(id) * ob.v(id)).sum();
        assert!((value - direct).abs() < 1e-14);
    }

    #[test]
    fn stopping_immediately_collects_the_node_value() {
        let lat = binary(2);
        let ob = wavy_obstacle(&lat);
        let mut decisions = vec![Decision::Continue; lat.node_count()];
        decisions[0] = Decision::StopAt;
        let tau = StoppingTime::new(lat.root(), decisions);
        let v = f_expectation(&lat, &Driver::zero(), &ob, lat.root(), &tau).unwrap();
        assert_eq!(v, ob.v(lat.root()));
    }

    #[test]
    fn linear_driver_discounts_in_closed_form() {
        // f = -rho y, stop at T, constant terminal c:
        // value at level k is c (1 + rho dt)^{-(N - k)}
        let lat = binary(4);
        let c = 2.0;
        let rho = 0.3;
        let ob = make_obstacle(&lat, |_| (-10.0, -10.0), |_| c);
        let tau = StoppingTime::at_terminal(&lat, lat.root());
        let driver = Driver::linear(rho, 0.0, 0.0, &[]);
        let dt = lat.dt(0);
        let value = f_expectation(&lat, &driver, &ob, lat.root(), &tau).unwrap();
        let expected = c * (1.0 + rho * dt).powi(-(lat.num_steps() as i32));
        assert!(
            (value - expected).abs() < 1e-10,
            "value {value} vs closed form {expected}"
        );
    }

    #[test]
    fn coarse_step_rejected() {
        let lat = binary(1);
        let driver = Driver::linear(0.6, 0.0, 0.0, &[]);
        let ob = wavy_obstacle(&lat);
        let tau = StoppingTime::at_terminal(&lat, lat.root());
        assert!(matches!(
            f_expectation(&lat, &driver, &ob, lat.root(), &tau),
            Err(Error::StepTooCoarse { .. })
        ));
    }

    #[test]
    fn epsilon_rule_stops_where_binding() {
        let lat = binary(2);
        // obstacle binding at the root on the node side
        let ob = make_obstacle(
            &lat,
            |id| if id.index() == 0 { (5.0, -1.0) } else { (-1.0, -1.0) },
            |_| 0.5,
        );
        let f = vec![0.0; lat.node_count()];
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        assert_eq!(sol.y.v(lat.root()), 5.0);
        let tau = epsilon_optimal_time(&lat, &sol, &ob, lat.root(), 0.5);
        assert_eq!(tau.decision(&lat, lat.root()), Decision::StopAt);
    }

    #[test]
    fn epsilon_gap_exact_for_zero_driver() {
        let lat = binary(3);
        let ob = wavy_obstacle(&lat);
        let f = vec![0.0; lat.node_count()];
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        for s in lat.node_ids() {
            for eps in [1.0, 0.1, 0.01] {
                let report =
                    check_epsilon_optimality_with(&lat, &Driver::zero(), &ob, &sol, s, eps)
                        .unwrap();
                assert!(
                    report.gap <= eps + 1e-12,
                    "S = {s}, eps = {eps}: gap {}",
                    report.gap
                );
            }
        }
    }

    #[test]
    fn nonbinding_rule_waits_for_terminal() {
        let lat = binary(2);
        let ob = make_obstacle(&lat, |_| (-10.0, -10.0), |id| (id.index() % 2) as f64);
        let f = vec![0.0; lat.node_count()];
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        let tau = epsilon_optimal_time(&lat, &sol, &ob, lat.root(), 0.5);
        for id in lat.internal_ids() {
            assert_eq!(tau.decision(&lat, id), Decision::Continue);
        }
    }

    #[test]
    fn hitting_time_identity_and_gate() {
        let lat = binary(3);
        // American-put-style payoff on the running minimum of W: monotone
        // along paths, so the l.u.s.c. surrogate holds (a payoff on the
        // level of W would carry artificial left jumps at noise scale and
        // trip the gate).
        let put = |id: NodeId| {
            let path = lat.path_to(id);
            let mut w = 0.0f64;
            let mut running_min = 0.0f64;
            for p in path.windows(2) {
                let (parent, child) = (p[0], p[1]);
                w += lat
                    .node(parent)
                    .branches
                    .iter()
                    .find(|br| br.child == child)
                    .unwrap()
                    .dw;
                running_min = running_min.min(w);
            }
            (0.5 - running_min).max(0.0)
        };
        let ob = make_obstacle(&lat, |id| (put(id), put(id)), put);
        let f = vec![0.0; lat.node_count()];
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        let (_, report) =
            optimal_time_lusc(&lat, &Driver::zero(), &sol, &ob, lat.root()).unwrap();
        assert!(
            report.gap.abs() < 1e-9,
            "hitting rule gap {}",
            report.gap
        );
        // cross-check against the enumeration oracle
        let oracle = crate::snell::oracle_value(&lat, &f, &ob, lat.root()).unwrap();
        assert!((report.y_s - oracle).abs() < 1e-12);

        // an upward left jump trips the gate
        let bad = make_obstacle(
            &lat,
            |id| {
                if lat.time_index(id) == 0 {
                    (0.0, 5.0) // vplus above every child value
                } else {
                    (0.0, 0.0)
                }
            },
            |_| 0.0,
        );
        let sol_bad = solve_frozen(&lat, &f, &bad).unwrap();
        assert!(matches!(
            optimal_time_lusc(&lat, &Driver::zero(), &sol_bad, &bad, lat.root()),
            Err(Error::LuscViolated { .. })
        ));
    }

    #[test]
    fn constant_obstacle_hits_everywhere() {
        let lat = binary(2);
        let ob = make_obstacle(&lat, |_| (0.4, 0.4), |_| 0.4);
        let f = vec![0.0; lat.node_count()];
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        let (tau, report) =
            optimal_time_lusc(&lat, &Driver::zero(), &sol, &ob, lat.root()).unwrap();
        assert_eq!(tau.decision(&lat, lat.root()), Decision::StopAt);
        assert!(report.gap.abs() < 1e-14);
    }

    #[test]
    fn risk_is_negated_value_and_monotone() {
        let lat = binary(3);
        let ob = wavy_obstacle(&lat);
        let f: Vec<f64> = (0..lat.node_count()).map(|i| ((i % 3) as f64 - 1.0) * 0.2).collect();
        let sol = solve_frozen(&lat, &f, &ob).unwrap();
        let risk = risk_of(&lat, &sol);
        for id in lat.node_ids() {
            assert_eq!(risk.v[id.index()], -sol.y.v(id));
        }
        for leaf in lat.leaf_ids() {
            assert_eq!(risk.v[leaf.index()], -ob.v(leaf));
        }

        // shifted pair: the higher payoff has lower risk, and for the zero
        // driver the shift passes through exactly
        let delta = 0.3;
        let shifted = make_obstacle(
            &lat,
            |id| (ob.v(id) + delta, ob.vplus(id) + delta),
            |id| ob.v(id) + delta,
        );
        let zero = vec![0.0; lat.node_count()];
        let report = risk_measure_paired_frozen(&lat, &zero, &ob, &shifted).unwrap();
        assert!(report.violations.is_empty());
        let s_lo = solve_frozen(&lat, &zero, &ob).unwrap();
        let s_hi = solve_frozen(&lat, &zero, &shifted).unwrap();
        for id in lat.node_ids() {
            assert!(
                (s_hi.y.v(id) - s_lo.y.v(id) - delta).abs() < 1e-12,
                "zero-driver shift passes through exactly"
            );
        }
    }
}
