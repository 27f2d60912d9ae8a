//! Symmetric adjacency normalization and the iterated diffusion
//! operator S = ((1-alpha) I + alpha A_hat)^T.

use ndarray::Array2;

use crate::error::{Result, SbError};
use crate::graph::Graph;

#[derive(Debug, Clone)]
pub struct DiffusionMatrix {
    pub s: Array2<f64>,
    pub alpha: f64,
    pub steps: usize,
}

/// A_hat = D^{-1/2} (A + I) D^{-1/2} with D_ii = sum_j (A_ij + I_ij).
pub fn normalize_adjacency(g: &Graph) -> Array2<f64> {
    let n = g.n;
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut a_hat = Array2::zeros((n, n));
    for v in 0..n {
        a_hat[[v, v]] = inv_sqrt_deg[v] * inv_sqrt_deg[v];
        for &u in &g.adj[v] {
            a_hat[[v, u]] = inv_sqrt_deg[v] * inv_sqrt_deg[u];
        }
    }
    a_hat
}

/// Iterates S^(t+1) = alpha A_hat S^(t) + (1-alpha) S^(t) from S^(0) = I.
pub fn relation_diffusion(a_hat: &Array2<f64>, alpha: f64, steps: usize) -> Result<DiffusionMatrix> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SbError::Config(format!("alpha = {alpha} not in (0, 1)")));
    }
    if steps < 1 {
        return Err(SbError::Config("diffusion needs at least one step".into()));
    }
    let n = a_hat.nrows();
    let mut s = Array2::eye(n);
    for _ in 0..steps {
        s = alpha * a_hat.dot(&s) + (1.0 - alpha) * &s;
    }
    Ok(DiffusionMatrix { s, alpha, steps })
}

/// PPR closed form alpha (I - (1-alpha) A_hat)^{-1}, exposed as a
/// diagnostic companion to the iterative operator. Computed by Neumann
/// series summation to the requested tolerance.
pub fn ppr_closed_form(a_hat: &Array2<f64>, alpha: f64, tol: f64) -> Result<Array2<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SbError::Config(format!("alpha = {alpha} not in (0, 1)")));
    }
    let n = a_hat.nrows();
    let mut term = Array2::eye(n);
    let mut sum = term.clone();
    // spectral radius of (1-alpha) A_hat is at most 1-alpha, so the
    // series contracts geometrically
    let max_iters = ((tol.ln() / (1.0 - alpha).ln()).ceil() as usize).max(1) + 1;
    for _ in 0..max_iters {
        term = (1.0 - alpha) * a_hat.dot(&term);
        sum += &term;
    }
    Ok(alpha * sum)
}

/// Truncates entries with magnitude below `eps` to exact zero.
pub fn threshold_in_place(s: &mut Array2<f64>, eps: f64) {
    s.mapv_inplace(|x| if x.abs() < eps { 0.0 } else { x });
}
