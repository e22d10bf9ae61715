//! Approximate the reflection by the two-stage penalty and watch the
//! approach from below at rate 1/n, with the stage masses identifying the
//! predictable and purely discontinuous reflection parts.
//!
//! Run with: `cargo run --example penalization_rate`

use rbsde::instances;
use rbsde::lattice::{Lattice, LatticeSpec};
use rbsde::optional_process::make_obstacle;
use rbsde::penalization::{convergence_table, solve_penalized};
use rbsde::snell::solve_frozen;

fn main() -> rbsde::Result<()> {
    // canonical one-step binding node: continuation 1, right-limit
    // barrier 2, dt = 1; stage-1 value is (1 + 2n)/(1 + n)
    let lat = Lattice::build(&LatticeSpec::binary(1, 1.0))?;
    let ob = make_obstacle(
        &lat,
        |id| if id.index() == 0 { (0.0, 2.0) } else { (0.0, 0.0) },
        |_| 1.0,
    );
    let f = vec![0.0; lat.node_count()];
    println!("canonical binding node (gap closed form 1/(1+n)):");
    for n in [1.0, 10.0, 100.0, 1000.0] {
        let pen = solve_penalized(&lat, &f, &ob, n);
        let y = pen.y.vplus(lat.root());
        println!(
            "  n = {n:>6}: y+ = {y:.6}, gap = {:.6e}, gap * (1+n) = {:.6}",
            2.0 - y,
            (2.0 - y) * (1.0 + n)
        );
    }

    // random instance: monotone convergence of values and masses
    let lat = Lattice::build(&LatticeSpec::binary(4, 1.0))?;
    let mut rng = instances::rng_from_seed(8);
    let ob = instances::random_obstacle(&lat, &mut rng, &Default::default());
    let f = instances::random_frozen_driver(&lat, &mut rng, 1.0);
    let table = convergence_table(&lat, &f, &ob, &[1.0, 10.0, 100.0, 1000.0, 10000.0])?;
    println!("\nrandom instance, N = 4:");
    println!("{}", table.to_csv());

    let exact = solve_frozen(&lat, &f, &ob)?;
    let pen = solve_penalized(&lat, &f, &ob, 1e6);
    let k_gap = lat
        .internal_ids()
        .map(|id| {
            let i = id.index();
            (pen.k_a[i] - exact.a_incr[i])
                .abs()
                .max((pen.k_c[i] - exact.c_jump[i]).abs())
        })
        .fold(0.0f64, f64::max);
    println!(
        "at n = 1e6: value gap {:.3e}, penalty-mass gap to (A, C) {:.3e}",
        exact.y.max_abs_diff(&pen.y),
        k_gap
    );
    Ok(())
}
