//! Decompose a centered one-step increment into its Brownian part, its
//! compensated-jump part, and the orthogonal residual.
//!
//! Run with: `cargo run --example martingale_representation`

use rbsde::lattice::{Lattice, LatticeSpec, Mark};
use rbsde::representation::represent;

fn main() -> rbsde::Result<()> {
    let lat = Lattice::build(&LatticeSpec::with_marks(
        1,
        1.0,
        vec![Mark {
            label: "u".into(),
            value: 1.0,
            intensity: 0.2,
        }],
    ))?;
    let root = lat.root();

    // four branches, two regressors: the residual is generally nonzero and
    // carries the orthogonal part of the noise
    let increment = [1.0, -1.0, 2.0, -2.0];
    let rep = represent(&lat, root, &increment)?;
    println!("increment {:?}", increment);
    println!("z   = {}", rep.z);
    println!("psi = {:?}", rep.psi);
    println!("dM  = {:?}", rep.residual);

    // orthogonality: E[dM] = E[dM dW] = E[dM dPi~] = 0
    let node = lat.node(root);
    let mean: f64 = node
        .branches
        .iter()
        .zip(&rep.residual)
        .map(|(b, m)| b.prob * m)
        .sum();
    let dw_cov: f64 = node
        .branches
        .iter()
        .zip(&rep.residual)
        .map(|(b, m)| b.prob * m * b.dw)
        .sum();
    let jump_cov: f64 = node
        .branches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            b.prob * rep.residual[i] * lat.compensated_jump_increment(root, i, 0).unwrap()
        })
        .sum();
    println!("\nE[dM] = {mean:.2e}, E[dM dW] = {dw_cov:.2e}, E[dM dPi~] = {jump_cov:.2e}");

    // Pythagoras: energy splits into fitted and orthogonal parts
    let e_sq: f64 = node
        .branches
        .iter()
        .zip(&increment)
        .map(|(b, x)| b.prob * x * x)
        .sum();
    let res_sq: f64 = node
        .branches
        .iter()
        .zip(&rep.residual)
        .map(|(b, m)| b.prob * m * m)
        .sum();
    println!(
        "E[x^2] = {e_sq} = fitted {} + orthogonal {res_sq}",
        e_sq - res_sq
    );

    // projecting a regressor returns the regressor
    let jump_incr: Vec<f64> = (0..4)
        .map(|b| lat.compensated_jump_increment(root, b, 0).unwrap())
        .collect();
    let rep = represent(&lat, root, &jump_incr)?;
    println!(
        "\nprojecting dPi~ itself: z = {:.1e}, psi = {:?}, residual sup = {:.1e}",
        rep.z,
        rep.psi,
        rep.residual.iter().fold(0.0f64, |a, r| a.max(r.abs()))
    );
    Ok(())
}
