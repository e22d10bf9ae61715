//! The exponentially weighted norms on ladlag processes: sup norm, time
//! integral norm, jump norm, bracket norm, and the horizon bound tying the
//! first two together.
//!
//! Run with: `cargo run --example beta_norms`

use rbsde::instances;
use rbsde::lattice::{Lattice, LatticeSpec, Mark};
use rbsde::optional_process::{h2_norm_beta, sup_norm_beta, OptionalProcess};

fn main() -> rbsde::Result<()> {
    let lat = Lattice::build(&LatticeSpec::with_marks(
        4,
        1.0,
        vec![Mark {
            label: "u".into(),
            value: 1.0,
            intensity: 0.3,
        }],
    ))?;

    // closed forms on a constant path
    let one = OptionalProcess::constant(&lat, 1.0);
    println!("phi = 1:");
    for beta in [0.0, 1.0, 5.0] {
        let h2 = h2_norm_beta(&lat, &one, beta);
        let closed = if beta == 0.0 {
            1.0
        } else {
            (beta.exp() - 1.0) / beta
        };
        println!("  beta = {beta}: ||phi||^2 = {h2:.12} (closed form {closed:.12})");
    }

    // norms are monotone in beta and the time integral is bounded by
    // T times the sup norm, pathwise
    let mut rng = instances::rng_from_seed(1);
    let process = instances::random_process(&lat, &mut rng, 2.0);
    println!("\nrandom ladlag process:");
    let mut last_sup = 0.0;
    for beta in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let sup = sup_norm_beta(&lat, &process, beta);
        let h2 = h2_norm_beta(&lat, &process, beta);
        assert!(sup >= last_sup);
        assert!(h2 <= lat.horizon() * sup + 1e-12);
        println!(
            "  beta = {beta}: |||phi|||^2 = {sup:.6}, ||phi||^2 = {h2:.6}, T * sup = {:.6}",
            lat.horizon() * sup
        );
        last_sup = sup;
    }

    // solution-space norms of a solved instance
    let ob = instances::random_obstacle(&lat, &mut rng, &Default::default());
    let f = instances::random_frozen_driver(&lat, &mut rng, 1.0);
    let sol = rbsde::solve_frozen(&lat, &f, &ob)?;
    let report = sol.norm_report(&lat, 2.0);
    println!(
        "\nsolved instance at beta = 2: |||Y|||^2 = {:.6}, ||Z||^2 = {:.6}, \
         ||psi||^2 = {:.6}, ||M||^2 = {:.6}",
        report.sup_norm_sq, report.h2_norm_sq, report.lpi_norm_sq, report.m2_norm_sq
    );
    Ok(())
}
