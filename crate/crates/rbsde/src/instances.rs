//! Seeded random problem instances for sweeps and tests.
//!
//! Everything here is deterministic in the seed, so sweep outputs are
//! reproducible byte for byte. Obstacles follow an adapted random walk
//! with downward right jumps (upward ones would violate right
//! upper-semicontinuity and are only generated on request, for negative
//! tests).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::gl_formula::LadlagDecomposition;
use crate::lattice::{Lattice, LatticeSpec, Mark};
use crate::optional_process::{make_obstacle, Obstacle, OptionalProcess};

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Obstacle generation knobs.
#[derive(Debug, Clone)]
pub struct ObstacleParams {
    /// Scale of values and walk steps.
    pub amplitude: f64,
    /// Probability of a downward right jump at an internal node.
    pub right_jump_prob: f64,
    /// Generate upward right jumps instead (r.u.s.c. violations).
    pub allow_upward_right_jumps: bool,
}

impl Default for ObstacleParams {
    fn default() -> Self {
        ObstacleParams {
            amplitude: 1.0,
            right_jump_prob: 0.4,
            allow_upward_right_jumps: false,
        }
    }
}

/// The standard small-lattice suite: binary and binary-plus-one-mark
/// shapes for each step count.
pub fn lattice_suite(steps: &[usize], horizon: f64) -> Vec<LatticeSpec> {
    let mut specs = Vec::new();
    for &n in steps {
        specs.push(LatticeSpec::binary(n, horizon));
        specs.push(LatticeSpec::with_marks(
            n,
            horizon,
            vec![Mark {
                label: "u".into(),
                value: 1.0,
                intensity: 0.2,
            }],
        ));
    }
    specs
}

/// Adapted random-walk obstacle with right jumps.
pub fn random_obstacle(lat: &Lattice, rng: &mut ChaCha20Rng, params: &ObstacleParams) -> Obstacle {
    let a = params.amplitude;
    let mut v = vec![0.0; lat.node_count()];
    let mut vplus = vec![0.0; lat.node_count()];
    let root = lat.root().index();
    v[root] = rng.random_range(-a..a);
    for id in lat.node_ids() {
        let i = id.index();
        if !lat.is_leaf(id) {
            let jump = if rng.random_bool(params.right_jump_prob) {
                rng.random_range(0.0..a)
            } else {
                0.0
            };
            vplus[i] = if params.allow_upward_right_jumps {
                v[i] + jump
            } else {
                v[i] - jump
            };
            for b in &lat.node(id).branches {
                v[b.child.index()] = vplus[i] + rng.random_range(-a..a);
            }
        } else {
            vplus[i] = v[i];
        }
    }
    make_obstacle(lat, |id| (v[id.index()], vplus[id.index()]), |id| v[id.index()])
}

/// Obstacle compatible with the left-upper-semicontinuity surrogate:
/// every node value sits at or above the left limit coming in from its
/// parent (`v(child) >= vplus(parent)`), right jumps only downward.
pub fn random_lusc_obstacle(lat: &Lattice, rng: &mut ChaCha20Rng, amplitude: f64) -> Obstacle {
    let a = amplitude;
    let mut v = vec![0.0; lat.node_count()];
    let mut vplus = vec![0.0; lat.node_count()];
    v[lat.root().index()] = rng.random_range(-a..a);
    for id in lat.node_ids() {
        let i = id.index();
        if lat.is_leaf(id) {
            vplus[i] = v[i];
            continue;
        }
        vplus[i] = v[i] - rng.random_range(0.0..a);
        for b in &lat.node(id).branches {
            v[b.child.index()] = vplus[i] + rng.random_range(0.0..a);
        }
    }
    make_obstacle(lat, |id| (v[id.index()], vplus[id.index()]), |id| v[id.index()])
}

/// Per-node frozen driver values, uniform in `[-amplitude, amplitude]`.
pub fn random_frozen_driver(lat: &Lattice, rng: &mut ChaCha20Rng, amplitude: f64) -> Vec<f64> {
    (0..lat.node_count())
        .map(|_| rng.random_range(-amplitude..amplitude))
        .collect()
}

/// Random process with independent values on both sides.
pub fn random_process(lat: &Lattice, rng: &mut ChaCha20Rng, amplitude: f64) -> OptionalProcess {
    OptionalProcess::from_fn(lat, |_| {
        (
            rng.random_range(-amplitude..amplitude),
            rng.random_range(-amplitude..amplitude),
        )
    })
}

/// Random ladlag decomposition: martingale increments are centered under
/// each node's branch measure; the finite-variation parts are free.
pub fn random_decomposition(
    lat: &Lattice,
    rng: &mut ChaCha20Rng,
    amplitude: f64,
) -> LadlagDecomposition {
    let a = amplitude;
    let mut n_incr: Vec<Vec<f64>> = vec![Vec::new(); lat.node_count()];
    let mut a_incr = vec![0.0; lat.node_count()];
    let mut b_jump = vec![0.0; lat.node_count()];
    for id in lat.node_ids() {
        let i = id.index();
        if lat.is_leaf(id) {
            continue;
        }
        b_jump[i] = rng.random_range(-a..a);
        a_incr[i] = rng.random_range(-a..a);
        let raw: Vec<f64> = lat
            .node(id)
            .branches
            .iter()
            .map(|_| rng.random_range(-a..a))
            .collect();
        let mean = lat.cond_expect(id, &raw).unwrap();
        n_incr[i] = raw.iter().map(|x| x - mean).collect();
    }
    LadlagDecomposition {
        y0: rng.random_range(-a..a),
        n_incr,
        a_incr,
        b_jump,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obstacles_are_rusc_by_default() {
        let mut rng = rng_from_seed(7);
        for spec in lattice_suite(&[1, 2, 3], 1.0) {
            let lat = Lattice::build(&spec).unwrap();
            let ob = random_obstacle(&lat, &mut rng, &ObstacleParams::default());
            assert!(ob.is_rusc());
        }
    }

    #[test]
    fn upward_jumps_get_flagged() {
        let mut rng = rng_from_seed(11);
        let lat = Lattice::build(&LatticeSpec::binary(3, 1.0)).unwrap();
        let params = ObstacleParams {
            right_jump_prob: 1.0,
            allow_upward_right_jumps: true,
            ..ObstacleParams::default()
        };
        let ob = random_obstacle(&lat, &mut rng, &params);
        assert!(!ob.is_rusc());
    }

    #[test]
    fn deterministic_in_seed() {
        let lat = Lattice::build(&LatticeSpec::binary(3, 1.0)).unwrap();
        let a = random_frozen_driver(&lat, &mut rng_from_seed(42), 1.0);
        let b = random_frozen_driver(&lat, &mut rng_from_seed(42), 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn decomposition_martingale_parts_centered() {
        let lat = Lattice::build(&LatticeSpec::binary(3, 1.0)).unwrap();
        let dec = random_decomposition(&lat, &mut rng_from_seed(3), 2.0);
        for id in lat.internal_ids() {
            let mean = lat.cond_expect(id, &dec.n_incr[id.index()]).unwrap();
            assert!(mean.abs() < 1e-12);
        }
    }
}
