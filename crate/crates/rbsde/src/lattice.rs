//! Finite scenario lattice: the discrete stochastic basis.
//!
//! A [`Lattice`] is a non-recombining tree over a deterministic time grid
//! `t_0 = 0 < … < t_N = T`. Each internal node carries a list of branches,
//! and each branch carries a conditional probability, a Brownian-type
//! increment `dW`, and an optional jump mark. The construction is closed
//! form:
//!
//! * Brownian branches `±sqrt(dt)` with conditional probability 1/2 each,
//! * per mark `u` a jump branch with probability `mu(u)*dt`,
//! * the no-jump branch keeps the remaining mass `1 - sum_u mu(u)*dt`.
//!
//! The moment conditions — `E[dW] = 0`, `E[dW^2] = dt`, per-mark jump
//! probability `mu(u)*dt`, and zero correlation between `dW` and each
//! compensated jump indicator — are the correctness contract and are
//! checked at build time to absolute tolerance 1e-12.
//!
//! The tree is non-recombining on purpose: conditional expectations and
//! adaptedness are structural, and obstacles may be path-dependent. Cost is
//! exponential in the number of steps, which is acceptable at desk scale.
//! A lattice is immutable after construction and safe to share across
//! threads.

use crate::error::{Error, Result};

/// Absolute tolerance for the build-time moment checks.
pub const BUILD_TOL: f64 = 1e-12;

/// Opaque node identifier. Nodes are stored in level order, so ids are
/// also usable as indices into per-node data vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    /// Index into per-node storage.
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A jump mark: an abstract label with a real payoff coordinate and a
/// Poisson intensity (rate per unit time).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Mark {
    pub label: String,
    /// The point of the mark space the label stands for; obstacle builders
    /// may use it, the solver itself never does.
    pub value: f64,
    /// Intensity `mu(u) > 0`. Zero-intensity marks are rejected at build
    /// time because they would create zero-probability branches.
    pub intensity: f64,
}

/// Ordered finite set of jump marks with intensities.
#[derive(Debug, Clone, Default)]
pub struct MarkSpace {
    marks: Vec<Mark>,
}

impl MarkSpace {
    pub fn new(marks: Vec<Mark>) -> Result<Self> {
        for m in &marks {
            if !m.intensity.is_finite() || m.intensity <= 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "mark '{}' must have a finite positive intensity, got {}",
                    m.label, m.intensity
                )));
            }
        }
        Ok(MarkSpace { marks })
    }

    pub fn empty() -> Self {
        MarkSpace { marks: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Mark> {
        self.marks.iter()
    }

    pub fn mark(&self, index: usize) -> Result<&Mark> {
        self.marks.get(index).ok_or(Error::UnknownMark {
            index,
            len: self.marks.len(),
        })
    }

    pub fn intensity(&self, index: usize) -> Result<f64> {
        Ok(self.mark(index)?.intensity)
    }

    /// Sum of all intensities.
    pub fn total_intensity(&self) -> f64 {
        self.marks.iter().map(|m| m.intensity).sum()
    }

    /// Intensities as a slice-backed vector, in mark order.
    pub fn intensities(&self) -> Vec<f64> {
        self.marks.iter().map(|m| m.intensity).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.marks.iter().position(|m| m.label == label)
    }
}

/// One branch of an internal node.
#[derive(Debug, Clone)]
pub struct Branch {
    /// Conditional probability, strictly positive.
    pub prob: f64,
    /// Brownian-type increment over the step.
    pub dw: f64,
    /// Jump mark carried by this branch, if any (at most one per step).
    pub mark: Option<usize>,
    /// Child node reached along this branch.
    pub child: NodeId,
}

/// A tree node. Leaves have an empty branch list.
#[derive(Debug, Clone)]
pub struct Node {
    /// Index into the time grid.
    pub time_index: usize,
    /// Parent node and the branch index leading here; `None` at the root.
    pub parent: Option<(NodeId, usize)>,
    pub branches: Vec<Branch>,
    /// Unconditional probability of reaching this node.
    pub prob: f64,
}

/// Declarative lattice description, also the CLI-facing schema.
#[derive(Debug, Clone)]
pub struct LatticeSpec {
    pub num_steps: usize,
    pub horizon: f64,
    pub marks: Vec<Mark>,
}

impl LatticeSpec {
    pub fn binary(num_steps: usize, horizon: f64) -> Self {
        LatticeSpec {
            num_steps,
            horizon,
            marks: Vec::new(),
        }
    }

    pub fn with_marks(num_steps: usize, horizon: f64, marks: Vec<Mark>) -> Self {
        LatticeSpec {
            num_steps,
            horizon,
            marks,
        }
    }
}

/// Guard against accidentally huge configurations.
const MAX_NODES: usize = 2_000_000;

/// The finite stochastic basis: time grid, tree topology, branch
/// probabilities, Brownian increments, and jump marks with compensator.
#[derive(Debug, Clone)]
pub struct Lattice {
    times: Vec<f64>,
    nodes: Vec<Node>,
    /// `level_start[k]..level_start[k+1]` are the nodes at time index `k`.
    level_start: Vec<usize>,
    mark_space: MarkSpace,
}

impl Lattice {
    /// Builds the lattice from a spec. Probabilities are constructed in
    /// closed form and all invariants are verified before returning.
    pub fn build(spec: &LatticeSpec) -> Result<Self> {
        if spec.num_steps == 0 {
            return Err(Error::InvalidSpec("num_steps must be >= 1".into()));
        }
        if !spec.horizon.is_finite() || spec.horizon <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "horizon must be positive and finite, got {}",
                spec.horizon
            )));
        }
        let mark_space = MarkSpace::new(spec.marks.clone())?;
        let n = spec.num_steps;
        let dt = spec.horizon / n as f64;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();

        let jump_mass: f64 = mark_space.total_intensity() * dt;
        if jump_mass >= 1.0 {
            return Err(Error::InvalidSpec(format!(
                "sum of mark intensities times dt must be < 1, got {}",
                jump_mass
            )));
        }

        let branching = 2 * (mark_space.len() + 1);
        let mut expected_nodes: usize = 1;
        let mut level_width: usize = 1;
        for _ in 0..n {
            level_width = level_width
                .checked_mul(branching)
                .ok_or_else(|| Error::InvalidSpec("lattice size overflows".into()))?;
            expected_nodes = expected_nodes
                .checked_add(level_width)
                .ok_or_else(|| Error::InvalidSpec("lattice size overflows".into()))?;
            if expected_nodes > MAX_NODES {
                return Err(Error::InvalidSpec(format!(
                    "lattice would have more than {} nodes",
                    MAX_NODES
                )));
            }
        }

        // Per-level branch template: (prob, dw sign, mark).
        let sqrt_dt = dt.sqrt();
        let no_jump = 1.0 - jump_mass;
        let mut template: Vec<(f64, f64, Option<usize>)> = Vec::with_capacity(branching);
        template.push((no_jump / 2.0, sqrt_dt, None));
        template.push((no_jump / 2.0, -sqrt_dt, None));
        for (u, mark) in mark_space.iter().enumerate() {
            let p = mark.intensity * dt;
            template.push((p / 2.0, sqrt_dt, Some(u)));
            template.push((p / 2.0, -sqrt_dt, Some(u)));
        }

        let mut nodes: Vec<Node> = Vec::with_capacity(expected_nodes);
        let mut level_start = vec![0usize];
        nodes.push(Node {
            time_index: 0,
            parent: None,
            branches: Vec::new(),
            prob: 1.0,
        });
        level_start.push(nodes.len());

        for level in 0..n {
            let (lo, hi) = (level_start[level], level_start[level + 1]);
            for parent_idx in lo..hi {
                let parent_prob = nodes[parent_idx].prob;
                let mut branches = Vec::with_capacity(branching);
                for (b, &(p, dw, mark)) in template.iter().enumerate() {
                    let child = NodeId(nodes.len());
                    nodes.push(Node {
                        time_index: level + 1,
                        parent: Some((NodeId(parent_idx), b)),
                        branches: Vec::new(),
                        prob: parent_prob * p,
                    });
                    branches.push(Branch {
                        prob: p,
                        dw,
                        mark,
                        child,
                    });
                }
                nodes[parent_idx].branches = branches;
            }
            level_start.push(nodes.len());
        }

        let lattice = Lattice {
            times,
            nodes,
            level_start,
            mark_space,
        };
        lattice.check_invariants(BUILD_TOL)?;
        Ok(lattice)
    }

    pub fn num_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, index: usize) -> f64 {
        self.times[index]
    }

    /// Step length of the interval starting at grid index `k`.
    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id.0].branches.is_empty()
    }

    /// Time-grid index of a node.
    pub fn time_index(&self, id: NodeId) -> usize {
        self.nodes[id.0].time_index
    }

    /// Grid time of a node.
    pub fn node_time(&self, id: NodeId) -> f64 {
        self.times[self.nodes[id.0].time_index]
    }

    /// Unconditional probability of reaching a node.
    pub fn node_prob(&self, id: NodeId) -> f64 {
        self.nodes[id.0].prob
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    /// Nodes at a given time index, in storage order.
    pub fn nodes_at(&self, level: usize) -> impl Iterator<Item = NodeId> {
        (self.level_start[level]..self.level_start[level + 1]).map(NodeId)
    }

    pub fn internal_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&id| !self.is_leaf(id))
    }

    pub fn leaf_ids(&self) -> impl Iterator<Item = NodeId> {
        self.nodes_at(self.num_steps())
    }

    pub fn marks(&self) -> &MarkSpace {
        &self.mark_space
    }

    /// Path from the root to `id`, inclusive.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some((parent, _)) = self.nodes[cur.0].parent {
            path.push(parent);
            cur = parent;
        }
        path.reverse();
        path
    }

    /// Exact conditional expectation `E[values | node]` for per-branch
    /// values: the probability-weighted sum over the node's branches.
    pub fn cond_expect(&self, node: NodeId, values: &[f64]) -> Result<f64> {
        let branches = &self.nodes[node.0].branches;
        if values.len() != branches.len() {
            return Err(Error::MissingBranchValue {
                node,
                expected: branches.len(),
                got: values.len(),
            });
        }
        Ok(branches
            .iter()
            .zip(values)
            .map(|(b, v)| b.prob * v)
            .sum())
    }

    /// Compensated jump increment of mark `u` along one branch:
    /// `1_{branch jumps with u} - mu(u) * dt`.
    pub fn compensated_jump_increment(
        &self,
        node: NodeId,
        branch: usize,
        mark: usize,
    ) -> Result<f64> {
        let mu = self.mark_space.intensity(mark)?;
        let n = &self.nodes[node.0];
        let b = n.branches.get(branch).ok_or(Error::MissingBranchValue {
            node,
            expected: n.branches.len(),
            got: branch,
        })?;
        let indicator = if b.mark == Some(mark) { 1.0 } else { 0.0 };
        Ok(indicator - mu * self.dt(n.time_index))
    }

    /// Verifies every lattice invariant to the given absolute tolerance.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        for id in self.node_ids() {
            let node = &self.nodes[id.0];
            if node.branches.is_empty() {
                continue;
            }
            let dt = self.dt(node.time_index);
            let p_sum: f64 = node.branches.iter().map(|b| b.prob).sum();
            if (p_sum - 1.0).abs() > tol {
                return fail(format!("node {id}: branch probabilities sum to {p_sum}"));
            }
            let mean_dw: f64 = node.branches.iter().map(|b| b.prob * b.dw).sum();
            if mean_dw.abs() > tol {
                return fail(format!("node {id}: E[dW] = {mean_dw}"));
            }
            let var_dw: f64 = node.branches.iter().map(|b| b.prob * b.dw * b.dw).sum();
            if (var_dw - dt).abs() > tol {
                return fail(format!("node {id}: E[dW^2] = {var_dw}, dt = {dt}"));
            }
            for (u, mark) in self.mark_space.iter().enumerate() {
                let jump_prob: f64 = node
                    .branches
                    .iter()
                    .filter(|b| b.mark == Some(u))
                    .map(|b| b.prob)
                    .sum();
                if (jump_prob - mark.intensity * dt).abs() > tol {
                    return fail(format!(
                        "node {id}: P[jump {}] = {jump_prob}, compensator {}",
                        mark.label,
                        mark.intensity * dt
                    ));
                }
                let cross: f64 = node
                    .branches
                    .iter()
                    .map(|b| {
                        let x = if b.mark == Some(u) { 1.0 } else { 0.0 } - mark.intensity * dt;
                        b.prob * b.dw * x
                    })
                    .sum();
                if cross.abs() > tol {
                    return fail(format!(
                        "node {id}: E[dW * compensated jump {}] = {cross}",
                        mark.label
                    ));
                }
            }
            for b in &node.branches {
                if b.prob <= 0.0 {
                    return fail(format!("node {id}: nonpositive branch probability"));
                }
            }
        }
        let leaf_mass: f64 = self.leaf_ids().map(|id| self.node_prob(id)).sum();
        if (leaf_mass - 1.0).abs() > tol {
            return fail(format!("leaf path probabilities sum to {leaf_mass}"));
        }
        Ok(())
    }
}

/// Builds a lattice from a spec; alias for [`Lattice::build`].
pub fn build_lattice(spec: &LatticeSpec) -> Result<Lattice> {
    Lattice::build(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_mark(intensity: f64) -> Vec<Mark> {
        vec![Mark {
            label: "u".into(),
            value: 1.0,
            intensity,
        }]
    }

    #[test]
    fn binary_one_step() {
        let lat = Lattice::build(&LatticeSpec::binary(1, 1.0)).unwrap();
        assert_eq!(lat.node_count(), 3);
        let root = lat.root();
        let branches = &lat.node(root).branches;
        assert_eq!(branches.len(), 2);
        for b in branches {
            assert!((b.prob - 0.5).abs() < 1e-15);
            assert!((b.dw.abs() - 1.0).abs() < 1e-15, "dw = +-sqrt(1) = +-1");
        }
    }

    #[test]
    fn one_mark_four_branches() {
        // Hand solve of the four moment conditions with mu = 0.2, dt = 1:
        // no-jump mass 0.8 split over +-, jump mass 0.2 split over +-.
        let lat =
            Lattice::build(&LatticeSpec::with_marks(1, 1.0, one_mark(0.2))).unwrap();
        let branches = &lat.node(lat.root()).branches;
        assert_eq!(branches.len(), 4);
        let mut probs: Vec<f64> = branches.iter().map(|b| b.prob).collect();
        probs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(probs, vec![0.1, 0.1, 0.4, 0.4]);
        for b in branches {
            if b.prob == 0.1 {
                assert_eq!(b.mark, Some(0), "jump indicator rides the 0.1 branches");
            } else {
                assert_eq!(b.mark, None);
            }
        }
    }

    #[test]
    fn binary_two_steps_node_count() {
        let lat = Lattice::build(&LatticeSpec::binary(2, 1.0)).unwrap();
        assert_eq!(lat.node_count(), 7); // 1 + 2 + 4
        assert_eq!(lat.leaf_ids().count(), 4);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(Lattice::build(&LatticeSpec::binary(0, 1.0)).is_err());
        assert!(Lattice::build(&LatticeSpec::binary(2, 0.0)).is_err());
        assert!(Lattice::build(&LatticeSpec::binary(2, -1.0)).is_err());
        // sum mu * dt >= 1
        assert!(Lattice::build(&LatticeSpec::with_marks(1, 1.0, one_mark(1.0))).is_err());
        // zero intensity would create a zero-probability branch
        assert!(Lattice::build(&LatticeSpec::with_marks(1, 1.0, one_mark(0.0))).is_err());
    }

    #[test]
    fn cond_expect_examples() {
        let lat = Lattice::build(&LatticeSpec::binary(1, 1.0)).unwrap();
        assert_eq!(lat.cond_expect(lat.root(), &[3.0, 1.0]).unwrap(), 2.0);

        let lat =
            Lattice::build(&LatticeSpec::with_marks(1, 1.0, one_mark(0.2))).unwrap();
        // constants are fixed points
        assert!((lat.cond_expect(lat.root(), &[1.0; 4]).unwrap() - 1.0).abs() < 1e-15);
        // hand sum with probs (0.4, 0.4, 0.1, 0.1)
        let got = lat.cond_expect(lat.root(), &[2.0, 0.0, 5.0, 5.0]).unwrap();
        assert!((got - 1.8).abs() < 1e-15, "got {got}");

        assert!(matches!(
            lat.cond_expect(lat.root(), &[1.0, 2.0]),
            Err(Error::MissingBranchValue { .. })
        ));
    }

    #[test]
    fn compensated_jump_increment_examples() {
        let lat =
            Lattice::build(&LatticeSpec::with_marks(1, 1.0, one_mark(0.2))).unwrap();
        let root = lat.root();
        let mut values = Vec::new();
        for b in 0..4 {
            values.push(lat.compensated_jump_increment(root, b, 0).unwrap());
        }
        for (b, v) in values.iter().enumerate() {
            let jumps = lat.node(root).branches[b].mark == Some(0);
            let expected = if jumps { 0.8 } else { -0.2 };
            assert!((v - expected).abs() < 1e-15);
        }
        // compensator property: conditional expectation is zero
        let mean = lat.cond_expect(root, &values).unwrap();
        assert!(mean.abs() < 1e-15);

        assert!(matches!(
            lat.compensated_jump_increment(root, 0, 3),
            Err(Error::UnknownMark { .. })
        ));
    }

    #[test]
    fn tower_property_exact() {
        let lat =
            Lattice::build(&LatticeSpec::with_marks(3, 2.0, one_mark(0.3))).unwrap();
        // leaf-valued function
        let leaf_value = |id: NodeId| (id.index() % 7) as f64 - 3.0;
        let direct: f64 = lat
            .leaf_ids()
            .map(|id| lat.node_prob(id) * leaf_value(id))
            .sum();
        // iterated conditional expectations from leaves to root
        let mut values = vec![0.0; lat.node_count()];
        for id in lat.leaf_ids() {
            values[id.index()] = leaf_value(id);
        }
        for level in (0..lat.num_steps()).rev() {
            for id in lat.nodes_at(level) {
                let child_vals: Vec<f64> = lat
                    .node(id)
                    .branches
                    .iter()
                    .map(|b| values[b.child.index()])
                    .collect();
                values[id.index()] = lat.cond_expect(id, &child_vals).unwrap();
            }
        }
        assert!(
            (values[lat.root().index()] - direct).abs() < 1e-13,
            "tower property: iterated {} vs direct {}",
            values[lat.root().index()],
            direct
        );
    }

    #[test]
    fn brownian_moments_hold_on_every_node() {
        for spec in [
            LatticeSpec::binary(4, 1.0),
            LatticeSpec::with_marks(3, 1.5, one_mark(0.4)),
            LatticeSpec::with_marks(
                2,
                1.0,
                vec![
                    Mark {
                        label: "a".into(),
                        value: -1.0,
                        intensity: 0.3,
                    },
                    Mark {
                        label: "b".into(),
                        value: 2.0,
                        intensity: 0.1,
                    },
                ],
            ),
        ] {
            let lat = Lattice::build(&spec).unwrap();
            lat.check_invariants(1e-14).unwrap();
        }
    }
}
