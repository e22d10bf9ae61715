//! Construct a scenario lattice with Brownian branches and a jump mark,
//! inspect the branch layout, and take exact conditional expectations.
//!
//! Run with: `cargo run --example build_lattice`

use rbsde::lattice::{Lattice, LatticeSpec, Mark};

fn main() -> rbsde::Result<()> {
    let spec = LatticeSpec::with_marks(
        2,
        1.0,
        vec![Mark {
            label: "crash".into(),
            value: -0.3,
            intensity: 0.2,
        }],
    );
    let lat = Lattice::build(&spec)?;
    println!(
        "lattice: {} steps to T = {}, {} nodes, {} leaves",
        lat.num_steps(),
        lat.horizon(),
        lat.node_count(),
        lat.leaf_ids().count()
    );

    let root = lat.root();
    println!("\nroot branches (prob, dW, mark):");
    for b in &lat.node(root).branches {
        println!(
            "  p = {:<5} dW = {:+.4}  mark = {:?}",
            b.prob,
            b.dw,
            b.mark.map(|u| lat.marks().mark(u).unwrap().label.clone())
        );
    }

    // conditional expectation is an exact probability-weighted sum
    let values = [2.0, 0.0, 5.0, 5.0];
    println!(
        "\nE[{:?} | root] = {}",
        values,
        lat.cond_expect(root, &values)?
    );

    // the compensated jump increment has conditional mean zero
    let compensated: Vec<f64> = (0..lat.node(root).branches.len())
        .map(|b| lat.compensated_jump_increment(root, b, 0).unwrap())
        .collect();
    println!(
        "compensated jump increments {:?} -> E = {:.2e}",
        compensated,
        lat.cond_expect(root, &compensated)?
    );

    // moment conditions hold to build tolerance on every node
    lat.check_invariants(1e-14)?;
    println!("\nall moment conditions verified at 1e-14");
    Ok(())
}
