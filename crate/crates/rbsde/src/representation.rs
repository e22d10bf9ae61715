//! Per-node martingale representation.
//!
//! Any centered one-step increment decomposes as
//!
//! ```text
//! increment = z * dW + sum_u psi(u) * (1_{jump = u} - mu(u) dt) + dM
//! ```
//!
//! where `(z, psi)` is the L2-orthogonal projection of the increment onto
//! the span of the Brownian increment and the compensated jump indicators
//! under the node's branch measure, and the residual `dM` is the orthogonal
//! martingale increment. Projection is the definition here: with more
//! branches than regressors the residual is genuinely nonzero and carries
//! the orthogonal part of the filtration's noise. When the node has exactly
//! one branch more than the regressor count (in general position), the fit
//! is exact and the residual vanishes — a complete-market node.
//!
//! The normal equations are solved by direct dense factorization; mark
//! spaces are tiny so the systems stay at most 5x5. The compensated jump
//! regressors of different marks are mutually correlated (at most one jump
//! per step), so no orthogonalization shortcut is assumed.

use crate::error::{Error, Result};
use crate::lattice::{Lattice, NodeId};

/// Tolerance above which a supplied increment is rejected as not centered.
pub const CENTERING_TOL: f64 = 1e-10;

/// One-step decomposition at a node.
#[derive(Debug, Clone)]
pub struct NodeRepresentation {
    /// Integrand against the Brownian increment.
    pub z: f64,
    /// Integrand against each compensated jump increment, in mark order.
    pub psi: Vec<f64>,
    /// Residual per branch: the orthogonal martingale increment.
    pub residual: Vec<f64>,
}

/// Projects a centered per-branch increment onto the span of `dW` and the
/// compensated jump increments at `node`, returning the coefficients and
/// the orthogonal residual.
pub fn represent(lat: &Lattice, node: NodeId, increment: &[f64]) -> Result<NodeRepresentation> {
    let branches = &lat.node(node).branches;
    if increment.len() != branches.len() {
        return Err(Error::MissingBranchValue {
            node,
            expected: branches.len(),
            got: increment.len(),
        });
    }
    let mean: f64 = branches
        .iter()
        .zip(increment)
        .map(|(b, x)| b.prob * x)
        .sum();
    if mean.abs() > CENTERING_TOL {
        return Err(Error::NotCentered { node, mean });
    }

    let m = lat.marks().len();
    let dim = 1 + m;
    let k = lat.time_index(node);
    let dt = lat.dt(k);
    let mu = lat.marks().intensities();

    // Regressor value on branch b, coordinate j (0 = dW, j >= 1 = mark j-1).
    let regressor = |j: usize, b: usize| -> f64 {
        let branch = &branches[b];
        if j == 0 {
            branch.dw
        } else {
            let u = j - 1;
            let ind = if branch.mark == Some(u) { 1.0 } else { 0.0 };
            ind - mu[u] * dt
        }
    };

    // Gram matrix and right-hand side under the branch measure.
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    for (b, branch) in branches.iter().enumerate() {
        let p = branch.prob;
        for i in 0..dim {
            let ri = regressor(i, b);
            rhs[i] += p * ri * increment[b];
            for j in i..dim {
                gram[i * dim + j] += p * ri * regressor(j, b);
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            gram[i * dim + j] = gram[j * dim + i];
        }
    }

    let coeffs = solve_dense(&mut gram, &mut rhs, dim).map_err(|col| {
        let regressor = if col == 0 {
            "dW".to_string()
        } else {
            lat.marks()
                .mark(col - 1)
                .map(|m| m.label.clone())
                .unwrap_or_else(|_| format!("mark {}", col - 1))
        };
        Error::SingularGram { node, regressor }
    })?;

    let residual: Vec<f64> = (0..branches.len())
        .map(|b| {
            let fitted: f64 = (0..dim).map(|j| coeffs[j] * regressor(j, b)).sum();
            increment[b] - fitted
        })
        .collect();

    Ok(NodeRepresentation {
        z: coeffs[0],
        psi: coeffs[1..].to_vec(),
        residual,
    })
}

/// Gaussian elimination with partial pivoting on a row-major `dim x dim`
/// system. Returns the column of the first vanishing pivot on failure.
fn solve_dense(a: &mut [f64], b: &mut [f64], dim: usize) -> std::result::Result<Vec<f64>, usize> {
    let scale = a
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for col in 0..dim {
        let pivot_row = (col..dim)
            .max_by(|&i, &j| {
                a[i * dim + col]
                    .abs()
                    .partial_cmp(&a[j * dim + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot_row * dim + col].abs() <= 1e-12 * scale {
            return Err(col);
        }
        if pivot_row != col {
            for j in 0..dim {
                a.swap(col * dim + j, pivot_row * dim + j);
            }
            b.swap(col, pivot_row);
        }
        for row in col + 1..dim {
            let factor = a[row * dim + col] / a[col * dim + col];
            for j in col..dim {
                a[row * dim + j] -= factor * a[col * dim + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; dim];
    for col in (0..dim).rev() {
        let mut acc = b[col];
        for j in col + 1..dim {
            acc -= a[col * dim + j] * x[j];
        }
        x[col] = acc / a[col * dim + col];
    }
    Ok(x)
}

/// Largest orthogonality residual of per-branch martingale increments over
/// the whole lattice: checks `E[dM] = 0`, `E[dM dW] = 0` and
/// `E[dM dPi~(u)] = 0` at every internal node.
pub fn max_orthogonality_residual(lat: &Lattice, m_incr: &[Vec<f64>]) -> f64 {
    let mu = lat.marks().intensities();
    let mut worst: f64 = 0.0;
    for id in lat.internal_ids() {
        let node = lat.node(id);
        let dt = lat.dt(node.time_index);
        let row = &m_incr[id.index()];
        let mean: f64 = node
            .branches
            .iter()
            .zip(row)
            .map(|(b, m)| b.prob * m)
            .sum();
        worst = worst.max(mean.abs());
        let dw_cov: f64 = node
            .branches
            .iter()
            .zip(row)
            .map(|(b, m)| b.prob * m * b.dw)
            .sum();
        worst = worst.max(dw_cov.abs());
        for (u, &mu_u) in mu.iter().enumerate() {
            let cov: f64 = node
                .branches
                .iter()
                .zip(row)
                .map(|(b, m)| {
                    let x = if b.mark == Some(u) { 1.0 } else { 0.0 } - mu_u * dt;
                    b.prob * m * x
                })
                .sum();
            worst = worst.max(cov.abs());
        }
    }
    worst
}
