//! Certify the backward recursion against brute force: the solution value
//! at every node equals the supremum over all two-sided stopping times,
//! enumerated one by one.
//!
//! Run with: `cargo run --example oracle_check`

use rbsde::instances::{self, ObstacleParams};
use rbsde::lattice::Lattice;
use rbsde::snell::{self, POLICY_GUARD};

fn main() -> rbsde::Result<()> {
    let mut worst: f64 = 0.0;
    let mut total_nodes = 0usize;
    for (i, spec) in instances::lattice_suite(&[1, 2, 3], 1.0).iter().enumerate() {
        let lat = Lattice::build(spec)?;
        let mut rng = instances::rng_from_seed(100 + i as u64);
        let ob = instances::random_obstacle(&lat, &mut rng, &ObstacleParams::default());
        let f = instances::random_frozen_driver(&lat, &mut rng, 1.0);
        let sol = snell::solve_frozen(&lat, &f, &ob)?;

        let mut checked = 0usize;
        let mut skipped = 0usize;
        let mut max_diff: f64 = 0.0;
        for id in lat.node_ids() {
            let policies = snell::policy_count(&lat, id);
            if policies > POLICY_GUARD {
                skipped += 1;
                continue;
            }
            let oracle = snell::oracle_value(&lat, &f, &ob, id)?;
            max_diff = max_diff.max((sol.y.v(id) - oracle).abs());
            checked += 1;
        }
        println!(
            "N = {}, marks = {}: root policies = {}, {checked} nodes checked \
             ({skipped} beyond the {POLICY_GUARD}-policy guard), max |Y - oracle| = {max_diff:.3e}",
            spec.num_steps,
            spec.marks.len(),
            snell::policy_count(&lat, lat.root()),
        );
        worst = worst.max(max_diff);
        total_nodes += checked;
    }
    println!("\noverall: {total_nodes} nodes, worst deviation {worst:.3e}");
    Ok(())
}
