//! Epsilon-optimal and exact-hitting stopping rules against a ladlag
//! obstacle, evaluated through the driver-weighted expectation.
//!
//! Run with: `cargo run --example optimal_stopping`

use rbsde::instances;
use rbsde::lattice::{Lattice, LatticeSpec};
use rbsde::picard::Driver;
use rbsde::snell::solve_frozen;
use rbsde::stopping::{check_epsilon_optimality_with, f_expectation, optimal_time_lusc};

fn main() -> rbsde::Result<()> {
    let lat = Lattice::build(&LatticeSpec::binary(4, 1.0))?;
    let mut rng = instances::rng_from_seed(31);
    let ob = instances::random_obstacle(&lat, &mut rng, &Default::default());
    let f = vec![0.0; lat.node_count()];
    let sol = solve_frozen(&lat, &f, &ob)?;
    let driver = Driver::zero();
    let root = lat.root();

    // stopping at the horizon evaluates to the plain expectation
    let tau_t = rbsde::StoppingTime::at_terminal(&lat, root);
    println!(
        "hold to the horizon: E[xi_T] = {:.6} <= Y_0 = {:.6}",
        f_expectation(&lat, &driver, &ob, root, &tau_t)?,
        sol.y.v(root)
    );

    // the epsilon rule: stop once Y <= xi + eps on either side; for the
    // zero driver the value loss is at most eps, exactly
    println!("\nepsilon rule at the root:");
    for eps in [1.0, 0.1, 0.01] {
        let report = check_epsilon_optimality_with(&lat, &driver, &ob, &sol, root, eps)?;
        println!(
            "  eps = {eps:>4}: stopped value {:.6}, gap {:.3e}, mean stop time {:.3}",
            report.stopped_value, report.gap, report.tau_mean_time
        );
        assert!(report.gap <= eps + 1e-12);
    }

    // the hitting rule needs the left-upper-semicontinuity surrogate;
    // monotone-along-paths obstacles qualify
    let ob = instances::random_lusc_obstacle(&lat, &mut rng, 1.0);
    let sol = solve_frozen(&lat, &f, &ob)?;
    let (tau, report) = optimal_time_lusc(&lat, &driver, &sol, &ob, root)?;
    let (mean_time, stop_nodes) = tau.summary(&lat);
    println!(
        "\nhitting rule tau*: Y_0 = {:.6}, stopped value = {:.6}, gap = {:.3e}",
        report.y_s, report.stopped_value, report.gap
    );
    println!("tau* stops at {stop_nodes} nodes, mean stopping time {mean_time:.3}");

    // a discounted evaluation through a linear driver
    let driver = Driver::linear(0.3, 0.0, 0.0, &[]);
    let value = f_expectation(&lat, &driver, &ob, root, &tau_t)?;
    println!(
        "\nlinear driver (rho = 0.3): discounted hold-to-horizon value {value:.6}"
    );
    Ok(())
}
