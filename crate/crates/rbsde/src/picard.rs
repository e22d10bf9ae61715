//! Fixed-point solver for Lipschitz drivers `f(t, y, z, psi)`.
//!
//! Each sweep of the map freezes the driver along the previous iterate —
//! `f_n = f(t_n, y.vplus(n), z(n), psi(n))` per node, the right limit being
//! the value the time integral actually sees — and solves the resulting
//! frozen-driver reflected equation. Distances between successive iterates
//! are measured in the beta-weighted norms
//!
//! ```text
//! d_i = |||dY|||^2_beta + ||dZ||^2_beta + ||d psi||^2_{L2,beta}
//! ```
//!
//! and the map contracts once beta is large relative to the Lipschitz
//! constant; the measured ratio is reported alongside the theoretical
//! factor `eps^2 C_K (5 + 16 c^2)(T + 1)`, in which `c` is a universal
//! constant. `c` is never assumed: diagnostics report the factor for a
//! caller-supplied `c` and leave the assertion to the measured ratio.
//!
//! The explicit freezing is deliberately kept instead of an implicit
//! per-node solve: it is the map whose contraction the diagnostics
//! measure. The implicit recursion survives only as a test oracle.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::optional_process::{
    h2_norm_beta_values, lpi_norm_beta, m2_norm_beta, sup_norm_beta, Obstacle, OptionalProcess,
};
use crate::snell::{solve_frozen, RbsdeSolution};

/// A generator `f(t, y, z, psi)` with a declared Lipschitz constant in
/// `(y, z, psi)`, the `psi` distance taken in `L2(mu)`.
#[derive(Clone)]
pub struct Driver {
    eval: Arc<dyn Fn(f64, f64, f64, &[f64]) -> f64 + Send + Sync>,
    pub lipschitz_k: f64,
    pub label: String,
}

impl std::fmt::Debug for Driver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Driver")
            .field("label", &self.label)
            .field("lipschitz_k", &self.lipschitz_k)
            .finish()
    }
}

impl Driver {
    pub fn new(
        label: impl Into<String>,
        lipschitz_k: f64,
        eval: impl Fn(f64, f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Driver {
            eval: Arc::new(eval),
            lipschitz_k,
            label: label.into(),
        }
    }

    /// The zero driver: plain optimal stopping.
    pub fn zero() -> Self {
        Driver::new("zero", 0.0, |_, _, _, _| 0.0)
    }

    /// A driver depending on time only.
    pub fn time_only(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Driver::new(label, 0.0, move |t, _, _, _| f(t))
    }

    /// Linear driver `-rho y + a z + b sum_u psi(u) mu(u)`. The Lipschitz
    /// constant is `max(|rho|, |a|, |b| sqrt(sum mu))` via Cauchy-Schwarz on
    /// the psi term.
    pub fn linear(rho: f64, a: f64, b: f64, mu: &[f64]) -> Self {
        let total_mu: f64 = mu.iter().sum();
        let k = rho.abs().max(a.abs()).max(b.abs() * total_mu.sqrt());
        let mu = mu.to_vec();
        Driver::new(
            format!("linear(rho={rho},a={a},b={b})"),
            k,
            move |_t, y, z, psi| {
                let jump: f64 = psi.iter().zip(&mu).map(|(p, m)| p * m).sum();
                -rho * y + a * z + b * jump
            },
        )
    }

    /// Bounded nonlinear driver `kappa sin(y)`, Lipschitz with `K = |kappa|`.
    pub fn bounded_nonlinear(kappa: f64) -> Self {
        Driver::new(format!("sin(kappa={kappa})"), kappa.abs(), move |_, y, _, _| {
            kappa * y.sin()
        })
    }

    pub fn eval(&self, t: f64, y: f64, z: f64, psi: &[f64]) -> f64 {
        (self.eval)(t, y, z, psi)
    }

    /// Spot-checks the declared Lipschitz bound on random probes; returns
    /// the worst observed ratio `|df| / (|dy| + |dz| + ||dpsi||_mu)`.
    pub fn probe_lipschitz(&self, mu: &[f64], probes: &[(f64, f64, f64, Vec<f64>, f64, f64, Vec<f64>)]) -> f64 {
        let mut worst: f64 = 0.0;
        for (t, y1, z1, p1, y2, z2, p2) in probes {
            let df = (self.eval(*t, *y1, *z1, p1) - self.eval(*t, *y2, *z2, p2)).abs();
            let dpsi: f64 = p1
                .iter()
                .zip(p2)
                .zip(mu)
                .map(|((a, b), m)| (a - b) * (a - b) * m)
                .sum::<f64>()
                .sqrt();
            let denom = (y1 - y2).abs() + (z1 - z2).abs() + dpsi;
            if denom > 1e-12 {
                worst = worst.max(df / denom);
            }
        }
        worst
    }
}

/// Starting point of the iteration.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub y: OptionalProcess,
    pub z: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
}

impl Iterate {
    pub fn zeros(lat: &Lattice) -> Self {
        Iterate {
            y: OptionalProcess::zeros(lat),
            z: vec![0.0; lat.node_count()],
            psi: vec![vec![0.0; lat.marks().len()]; lat.node_count()],
        }
    }

    pub fn constant(lat: &Lattice, c: f64) -> Self {
        Iterate {
            y: OptionalProcess::constant(lat, c),
            z: vec![c; lat.node_count()],
            psi: vec![vec![c; lat.marks().len()]; lat.node_count()],
        }
    }

    fn from_solution(sol: &RbsdeSolution) -> Self {
        Iterate {
            y: sol.y.clone(),
            z: sol.z.clone(),
            psi: sol.psi.clone(),
        }
    }
}

/// Convergence record of one solve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PicardDiagnostics {
    pub beta: f64,
    /// `1 / sqrt(beta)`, the tightest epsilon compatible with the estimate.
    pub epsilon: f64,
    /// Distances between successive iterates in the combined squared norm.
    pub iterates: Vec<f64>,
    /// Largest observed `d_{i+1} / d_i` over consecutive positive distances.
    pub measured_ratio: Option<f64>,
    /// `eps^2 C_K (5 + 16 c^2)(T + 1)` evaluated with `C_K = 3 K^2` and the
    /// placeholder `c = 1`; reported, never asserted.
    pub theoretical_factor: f64,
    pub converged: bool,
    pub iterations_used: usize,
}

impl PicardDiagnostics {
    /// The contraction factor for a caller-supplied universal constant.
    pub fn theoretical_factor_with(&self, lipschitz_k: f64, horizon: f64, c: f64) -> f64 {
        let c_k = 3.0 * lipschitz_k * lipschitz_k;
        self.epsilon * self.epsilon * c_k * (5.0 + 16.0 * c * c) * (horizon + 1.0)
    }
}

/// Default tolerance on the combined squared norm distance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Solves the reflected equation for a Lipschitz driver by iterating the
/// freeze-and-solve map from the zero iterate.
pub fn solve(
    lat: &Lattice,
    driver: &Driver,
    obstacle: &Obstacle,
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(RbsdeSolution, PicardDiagnostics)> {
    solve_from(lat, driver, obstacle, beta, tol, max_iter, Iterate::zeros(lat))
}

/// Same as [`solve`] with an explicit starting iterate; the fixed point
/// does not depend on it, which uniqueness tests exploit.
pub fn solve_from(
    lat: &Lattice,
    driver: &Driver,
    obstacle: &Obstacle,
    beta: f64,
    tol: f64,
    max_iter: usize,
    initial: Iterate,
) -> Result<(RbsdeSolution, PicardDiagnostics)> {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut current = initial;
    let mut distances = Vec::new();
    let mut solution: Option<RbsdeSolution> = None;

    for iteration in 1..=max_iter {
        let frozen: Vec<f64> = lat
            .node_ids()
            .map(|id| {
                let i = id.index();
                driver.eval(
                    lat.node_time(id),
                    current.y.vplus(id),
                    current.z[i],
                    &current.psi[i],
                )
            })
            .collect();
        let next = solve_frozen(lat, &frozen, obstacle)?;
        let d = iterate_distance(lat, &current, &next, beta);
        distances.push(d);
        let converged = d <= tol;
        current = Iterate::from_solution(&next);
        solution = Some(next);
        if converged {
            return Ok((
                solution.unwrap(),
                diagnostics(driver, lat, beta, distances, true, iteration),
            ));
        }
    }

    let d_last = *distances.last().unwrap();
    let _ = solution;
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_distance: d_last,
        tol,
    })
}

fn diagnostics(
    driver: &Driver,
    lat: &Lattice,
    beta: f64,
    iterates: Vec<f64>,
    converged: bool,
    iterations_used: usize,
) -> PicardDiagnostics {
    let epsilon = if beta > 0.0 { beta.sqrt().recip() } else { f64::INFINITY };
    let measured_ratio = iterates
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(None, |acc: Option<f64>, r| {
            Some(acc.map_or(r, |a| a.max(r)))
        });
    let mut diag = PicardDiagnostics {
        beta,
        epsilon,
        iterates,
        measured_ratio,
        theoretical_factor: 0.0,
        converged,
        iterations_used,
    };
    diag.theoretical_factor = diag.theoretical_factor_with(driver.lipschitz_k, lat.horizon(), 1.0);
    diag
}

fn iterate_distance(lat: &Lattice, a: &Iterate, b: &RbsdeSolution, beta: f64) -> f64 {
    let dy = a.y.sub(&b.y);
    let dz: Vec<f64> = a.z.iter().zip(&b.z).map(|(x, y)| x - y).collect();
    let dpsi: Vec<Vec<f64>> = a
        .psi
        .iter()
        .zip(&b.psi)
        .map(|(r1, r2)| r1.iter().zip(r2).map(|(x, y)| x - y).collect())
        .collect();
    sup_norm_beta(lat, &dy, beta)
        + h2_norm_beta_values(lat, &dz, beta)
        + lpi_norm_beta(lat, &dpsi, beta)
}

/// Both sides of the constant-free a-priori estimate for a pair of frozen
/// drivers sharing one obstacle, together with the implied ratio for the
/// sup-norm estimate whose universal constant the theory leaves free.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AprioriReport {
    pub epsilon: f64,
    pub beta: f64,
    /// `||Z1-Z2||^2_beta + ||M1-M2||^2 + ||psi1-psi2||^2`.
    pub lhs: f64,
    /// `eps^2 ||f1-f2||^2_beta`.
    pub rhs: f64,
    /// `|||Y1-Y2|||^2_beta`.
    pub y_sup_sq: f64,
    /// `|||Y1-Y2|||^2_beta / (4 eps^2 ||f1-f2||^2_beta)`; the theory bounds
    /// this by `1 + 4c^2` for a universal `c`, reported not asserted.
    pub implied_ratio: f64,
}

/// Margin added to `1/eps^2` when picking beta.
pub const APRIORI_BETA_MARGIN: f64 = 1.0;

/// Solves the reflected equation for two frozen drivers and checks the
/// constant-free estimate
/// `||dZ||^2 + ||dM||^2 + ||dpsi||^2 <= eps^2 ||f1 - f2||^2` at
/// `beta = 1/eps^2 + 1`. A violation is a solver bug, not a report item.
pub fn apriori_check(
    lat: &Lattice,
    f1: &[f64],
    f2: &[f64],
    obstacle: &Obstacle,
    epsilon: f64,
) -> Result<AprioriReport> {
    assert!(epsilon > 0.0);
    let beta = epsilon.powi(-2) + APRIORI_BETA_MARGIN;
    let s1 = solve_frozen(lat, f1, obstacle)?;
    let s2 = solve_frozen(lat, f2, obstacle)?;

    let dz: Vec<f64> = s1.z.iter().zip(&s2.z).map(|(a, b)| a - b).collect();
    let dpsi: Vec<Vec<f64>> = s1
        .psi
        .iter()
        .zip(&s2.psi)
        .map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| a - b).collect())
        .collect();
    let dm: Vec<Vec<f64>> = s1
        .m_incr
        .iter()
        .zip(&s2.m_incr)
        .map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| a - b).collect())
        .collect();
    let df: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a - b).collect();

    let lhs = h2_norm_beta_values(lat, &dz, beta)
        + m2_norm_beta(lat, &dm, beta)
        + lpi_norm_beta(lat, &dpsi, beta);
    let rhs = epsilon * epsilon * h2_norm_beta_values(lat, &df, beta);

    if lhs > rhs + 1e-12 * (1.0 + rhs) {
        return Err(Error::EstimateViolated { lhs, rhs });
    }

    let dy = s1.y.sub(&s2.y);
    let y_sup_sq = sup_norm_beta(lat, &dy, beta);
    let denom = 4.0 * epsilon * epsilon * h2_norm_beta_values(lat, &df, beta);
    let implied_ratio = if denom > 0.0 { y_sup_sq / denom } else { 0.0 };

    Ok(AprioriReport {
        epsilon,
        beta,
        lhs,
        rhs,
        y_sup_sq,
        implied_ratio,
    })
}
