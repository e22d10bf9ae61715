//! Adapted ladlag processes as (value, right-limit) pairs, obstacles, and
//! the exponentially weighted norms.
//!
//! A process is stored as one `(v, vplus)` pair per node: `v` is the value
//! at the node's grid time, `vplus` the right limit held on the open
//! interval to the next grid time. The left limit at `t_{k+1}` along a
//! branch is by convention the parent's `vplus` (paths are piecewise
//! constant on open intervals). The right jump at a node is
//! `vplus - v`, the left jump at a child is `child.v - parent.vplus`.
//!
//! Norm conventions. With `w` standing for `e^{beta t}`:
//!
//! * `sup_norm_beta`: expectation of the pathwise maximum of the weighted
//!   squares, taking the node value with weight `e^{beta t_k}` and the
//!   interval value with weight `e^{beta t_{k+1}}` (the supremum of
//!   `e^{beta s} vplus^2` over the open interval). This right-endpoint
//!   weighting is what makes `h2_norm_beta <= T * sup_norm_beta` hold
//!   pathwise for every beta.
//! * `h2_norm_beta`: expectation of the exact time integral of the squared
//!   interval values, with closed-form weights
//!   `(e^{beta t_{k+1}} - e^{beta t_k}) / beta` (and `dt` at `beta = 0`).
//! * `lpi_norm_beta`: left-endpoint sum over marks,
//!   `sum_k e^{beta t_k} sum_u psi_k(u)^2 mu(u) dt`.
//! * `m2_norm_beta`: martingale increments realize at the end of the step,
//!   `sum_k e^{beta t_{k+1}} (dM)^2`.

use crate::error::{Error, Result};
use crate::lattice::{Lattice, NodeId};

/// Adapted ladlag process: per node the pair (value at `t`, right limit at
/// `t+`). Immutable value object once built.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionalProcess {
    v: Vec<f64>,
    vplus: Vec<f64>,
}

impl OptionalProcess {
    pub fn new(lat: &Lattice, v: Vec<f64>, vplus: Vec<f64>) -> Result<Self> {
        if v.len() != lat.node_count() || vplus.len() != lat.node_count() {
            return Err(Error::InvalidSpec(format!(
                "process length {} / {} does not match node count {}",
                v.len(),
                vplus.len(),
                lat.node_count()
            )));
        }
        Ok(OptionalProcess { v, vplus })
    }

    pub fn constant(lat: &Lattice, c: f64) -> Self {
        OptionalProcess {
            v: vec![c; lat.node_count()],
            vplus: vec![c; lat.node_count()],
        }
    }

    pub fn zeros(lat: &Lattice) -> Self {
        Self::constant(lat, 0.0)
    }

    /// Builds from a per-node function returning `(v, vplus)`.
    pub fn from_fn(lat: &Lattice, mut f: impl FnMut(NodeId) -> (f64, f64)) -> Self {
        let mut v = vec![0.0; lat.node_count()];
        let mut vplus = vec![0.0; lat.node_count()];
        for id in lat.node_ids() {
            let (a, b) = f(id);
            v[id.index()] = a;
            vplus[id.index()] = b;
        }
        OptionalProcess { v, vplus }
    }

    pub fn v(&self, id: NodeId) -> f64 {
        self.v[id.index()]
    }

    pub fn vplus(&self, id: NodeId) -> f64 {
        self.vplus[id.index()]
    }

    pub(crate) fn set(&mut self, id: NodeId, v: f64, vplus: f64) {
        self.v[id.index()] = v;
        self.vplus[id.index()] = vplus;
    }

    /// Size of the right jump at a node: `vplus - v`.
    pub fn right_jump(&self, id: NodeId) -> f64 {
        self.vplus[id.index()] - self.v[id.index()]
    }

    /// Componentwise difference, both sides.
    pub fn sub(&self, other: &OptionalProcess) -> OptionalProcess {
        OptionalProcess {
            v: self
                .v
                .iter()
                .zip(&other.v)
                .map(|(a, b)| a - b)
                .collect(),
            vplus: self
                .vplus
                .iter()
                .zip(&other.vplus)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Largest absolute gap to another process over all nodes and sides.
    pub fn max_abs_diff(&self, other: &OptionalProcess) -> f64 {
        let dv = self
            .v
            .iter()
            .zip(&other.v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dp = self
            .vplus
            .iter()
            .zip(&other.vplus)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        dv.max(dp)
    }
}

/// A lower barrier: a ladlag process with terminal values fixed at the
/// leaves. Nodes with an upward right jump (`v < vplus`) violate the
/// right-upper-semicontinuity surrogate and are flagged, not rejected, so
/// that negative tests can build them.
#[derive(Debug, Clone)]
pub struct Obstacle {
    pub process: OptionalProcess,
    /// Nodes where `v < vplus` (upward right jump).
    pub rusc_flags: Vec<NodeId>,
}

impl Obstacle {
    pub fn v(&self, id: NodeId) -> f64 {
        self.process.v(id)
    }

    pub fn vplus(&self, id: NodeId) -> f64 {
        self.process.vplus(id)
    }

    /// True when no node carries an upward right jump.
    pub fn is_rusc(&self) -> bool {
        self.rusc_flags.is_empty()
    }
}

/// Builds an obstacle from a per-node builder and per-leaf terminal values.
/// At the leaves the terminal value overrides the builder on both sides.
pub fn make_obstacle(
    lat: &Lattice,
    mut builder: impl FnMut(NodeId) -> (f64, f64),
    mut terminal: impl FnMut(NodeId) -> f64,
) -> Obstacle {
    let mut process = OptionalProcess::from_fn(lat, &mut builder);
    for leaf in lat.leaf_ids() {
        let t = terminal(leaf);
        process.set(leaf, t, t);
    }
    let rusc_flags = lat
        .node_ids()
        .filter(|&id| process.v(id) < process.vplus(id))
        .collect();
    Obstacle {
        process,
        rusc_flags,
    }
}

/// The four weighted norms of a solution, all squared.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NormReport {
    pub beta: f64,
    pub sup_norm_sq: f64,
    pub h2_norm_sq: f64,
    pub lpi_norm_sq: f64,
    pub m2_norm_sq: f64,
}

/// `E[max over the path, both sides, of e^{beta t} value^2]`, the squared
/// weighted sup-norm. See the module docs for the interval weighting.
pub fn sup_norm_beta(lat: &Lattice, process: &OptionalProcess, beta: f64) -> f64 {
    // DFS with the running pathwise maximum; exact at desk scale.
    let mut total = 0.0;
    let mut stack: Vec<(NodeId, f64)> = vec![(lat.root(), f64::NEG_INFINITY)];
    while let Some((id, running)) = stack.pop() {
        let k = lat.time_index(id);
        let w_node = (beta * lat.time(k)).exp();
        let mut m = running.max(w_node * process.v(id).powi(2));
        if lat.is_leaf(id) {
            m = m.max(w_node * process.vplus(id).powi(2));
            total += lat.node_prob(id) * m;
        } else {
            let w_right = (beta * lat.time(k + 1)).exp();
            m = m.max(w_right * process.vplus(id).powi(2));
            for b in &lat.node(id).branches {
                stack.push((b.child, m));
            }
        }
    }
    total
}

/// Closed-form weight of the interval starting at grid index `k`:
/// `int_{t_k}^{t_{k+1}} e^{beta s} ds`.
fn interval_weight(lat: &Lattice, k: usize, beta: f64) -> f64 {
    if beta == 0.0 {
        lat.dt(k)
    } else {
        ((beta * lat.time(k + 1)).exp() - (beta * lat.time(k)).exp()) / beta
    }
}

/// `E[int_0^T e^{beta s} phi_s^2 ds]` for the piecewise-constant path that
/// holds `vplus` on each open interval. Exact closed form.
pub fn h2_norm_beta(lat: &Lattice, process: &OptionalProcess, beta: f64) -> f64 {
    h2_norm_beta_values(
        lat,
        &lat.node_ids()
            .map(|id| process.vplus(id))
            .collect::<Vec<_>>(),
        beta,
    )
}

/// Same as [`h2_norm_beta`] for plain per-node interval values (used for
/// the `Z` component and for frozen drivers).
pub fn h2_norm_beta_values(lat: &Lattice, values: &[f64], beta: f64) -> f64 {
    let mut total = 0.0;
    for id in lat.internal_ids() {
        let k = lat.time_index(id);
        total += lat.node_prob(id) * values[id.index()].powi(2) * interval_weight(lat, k, beta);
    }
    total
}

/// `E[sum_k e^{beta t_k} sum_u psi_k(u)^2 mu(u) dt]`, the weighted jump
/// norm; `psi[node][mark]`.
pub fn lpi_norm_beta(lat: &Lattice, psi: &[Vec<f64>], beta: f64) -> f64 {
    let mu = lat.marks().intensities();
    let mut total = 0.0;
    for id in lat.internal_ids() {
        let k = lat.time_index(id);
        let w = (beta * lat.time(k)).exp();
        let row = &psi[id.index()];
        let quad: f64 = row.iter().zip(&mu).map(|(p, m)| p * p * m).sum();
        total += lat.node_prob(id) * w * quad * lat.dt(k);
    }
    total
}

/// `E[sum_k e^{beta t_{k+1}} (dM_{k+1})^2]`, the weighted bracket norm for
/// per-branch martingale increments; `m_incr[node][branch]`.
pub fn m2_norm_beta(lat: &Lattice, m_incr: &[Vec<f64>], beta: f64) -> f64 {
    let mut total = 0.0;
    for id in lat.internal_ids() {
        let k = lat.time_index(id);
        let w = (beta * lat.time(k + 1)).exp();
        let node = lat.node(id);
        let quad: f64 = node
            .branches
            .iter()
            .zip(&m_incr[id.index()])
            .map(|(b, m)| b.prob * m * m)
            .sum();
        total += lat.node_prob(id) * w * quad;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{LatticeSpec, Mark};
    use proptest::prelude::*;

    fn binary(n: usize) -> Lattice {
        Lattice::build(&LatticeSpec::binary(n, 1.0)).unwrap()
    }

    #[test]
    fn obstacle_flags() {
        let lat = binary(1);
        // constant builder: no flags
        let ob = make_obstacle(&lat, |_| (1.5, 1.5), |_| 1.5);
        assert!(ob.is_rusc());
        assert_eq!(ob.v(lat.root()), 1.5);

        // downward right jump at 0 is allowed for r.u.s.c.
        let ob = make_obstacle(&lat, |_| (2.0, 1.0), |_| 0.0);
        assert!(ob.is_rusc());

        // upward right jump flagged
        let ob = make_obstacle(&lat, |_| (1.0, 2.0), |_| 0.0);
        assert_eq!(ob.rusc_flags, vec![lat.root()]);
    }

    #[test]
    fn terminal_overrides_builder() {
        let lat = binary(2);
        let ob = make_obstacle(&lat, |_| (7.0, 7.0), |leaf| leaf.index() as f64);
        for leaf in lat.leaf_ids() {
            assert_eq!(ob.v(leaf), leaf.index() as f64);
            assert_eq!(ob.vplus(leaf), leaf.index() as f64);
        }
    }

    #[test]
    fn sup_norm_hand_example() {
        // N=1 binary, beta=0, v(root)=1, leaves {3,-1}:
        // E[max(1, leaf^2)] = 0.5*9 + 0.5*1 = 5.
        let lat = binary(1);
        let mut leaf_vals = vec![3.0, -1.0].into_iter();
        let process = OptionalProcess::from_fn(&lat, |id| {
            if lat.is_leaf(id) {
                let v = leaf_vals.next().unwrap();
                (v, v)
            } else {
                (1.0, 1.0)
            }
        });
        assert_eq!(sup_norm_beta(&lat, &process, 0.0), 5.0);
    }

    #[test]
    fn sup_norm_trivial() {
        let lat = binary(2);
        assert_eq!(sup_norm_beta(&lat, &OptionalProcess::zeros(&lat), 3.0), 0.0);
        let c = OptionalProcess::constant(&lat, -2.0);
        assert!((sup_norm_beta(&lat, &c, 0.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn h2_norm_closed_form() {
        let lat = binary(4);
        let one = OptionalProcess::constant(&lat, 1.0);
        assert!((h2_norm_beta(&lat, &one, 0.0) - 1.0).abs() < 1e-14);
        let e = std::f64::consts::E;
        assert!(
            (h2_norm_beta(&lat, &one, 1.0) - (e - 1.0)).abs() < 1e-14,
            "integral of e^s over [0,1]"
        );
        assert_eq!(h2_norm_beta(&lat, &OptionalProcess::zeros(&lat), 1.0), 0.0);
    }

    #[test]
    fn lpi_and_m2_hand_sums() {
        let lat = Lattice::build(&LatticeSpec::with_marks(
            1,
            1.0,
            vec![Mark {
                label: "u".into(),
                value: 1.0,
                intensity: 0.2,
            }],
        ))
        .unwrap();
        let psi = vec![vec![1.0]; lat.node_count()];
        assert!((lpi_norm_beta(&lat, &psi, 0.0) - 0.2).abs() < 1e-15);
        let zero = vec![vec![0.0]; lat.node_count()];
        assert_eq!(lpi_norm_beta(&lat, &zero, 0.0), 0.0);

        let m0: Vec<Vec<f64>> = lat
            .node_ids()
            .map(|id| vec![0.0; lat.node(id).branches.len()])
            .collect();
        assert_eq!(m2_norm_beta(&lat, &m0, 1.0), 0.0);
    }

    fn random_process(lat: &Lattice, seed: &[f64]) -> OptionalProcess {
        OptionalProcess::from_fn(lat, |id| {
            let i = id.index();
            (
                seed[i % seed.len()] * ((i % 5) as f64 - 2.0),
                seed[(i + 3) % seed.len()] * ((i % 3) as f64 - 1.0),
            )
        })
    }

    proptest! {
        #[test]
        fn norms_monotone_in_beta(values in proptest::collection::vec(-5.0f64..5.0, 8),
                                  beta in 0.0f64..2.0, extra in 0.01f64..2.0) {
            let lat = binary(3);
            let process = random_process(&lat, &values);
            let beta2 = beta + extra;
            prop_assert!(sup_norm_beta(&lat, &process, beta2) >= sup_norm_beta(&lat, &process, beta) - 1e-12);
            prop_assert!(h2_norm_beta(&lat, &process, beta2) >= h2_norm_beta(&lat, &process, beta) - 1e-12);
        }

        #[test]
        fn h2_bounded_by_horizon_times_sup(values in proptest::collection::vec(-5.0f64..5.0, 8),
                                           beta in 0.0f64..3.0) {
            // E[int e^{beta t} phi_t^2 dt] <= T * E[sup e^{beta tau} phi_tau^2]
            let lat = binary(3);
            let process = random_process(&lat, &values);
            let h2 = h2_norm_beta(&lat, &process, beta);
            let sup = sup_norm_beta(&lat, &process, beta);
            prop_assert!(h2 <= lat.horizon() * sup + 1e-12,
                "h2 = {h2}, T*sup = {}", lat.horizon() * sup);
        }

        #[test]
        fn beta_zero_reduces_to_unweighted(values in proptest::collection::vec(-3.0f64..3.0, 8)) {
            let lat = binary(2);
            let process = random_process(&lat, &values);
            // at beta = 0 the h2 norm is the plain P-weighted sum of vplus^2 * dt
            let mut direct = 0.0;
            for id in lat.internal_ids() {
                direct += lat.node_prob(id) * process.vplus(id).powi(2) * lat.dt(lat.time_index(id));
            }
            prop_assert!((h2_norm_beta(&lat, &process, 0.0) - direct).abs() < 1e-12);
        }
    }
}
