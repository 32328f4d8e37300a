//! Bijection between the natural free coordinates and the optimizer's
//! unconstrained space.
//!
//! Structural positivity and the open weight simplex are baked into the map, so
//! every unconstrained point decodes to positive `omega`, `alpha`, scales, and
//! weights summing below one:
//!
//! * `phi_j` and `mu_k` pass through unchanged,
//! * `omega`, `alpha_j`, `sigma_k` travel as logs,
//! * weights travel as stick-breaking logits: `v_k = sigmoid(z_k)`,
//!   `w_k = v_k prod_{j<k} (1 - v_j)`.
//!
//! Box bounds and the completed component's feasibility are not encoded here; the
//! objective wrapper returns `+inf` outside them and the line search backs off.

use super::objective::theta_dim;

#[derive(Clone, Copy)]
pub(crate) struct Layout {
    pub p: usize,
    pub k: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        theta_dim(self.p, self.k)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(v: f64) -> f64 {
    (v / (1.0 - v)).ln()
}

/// Unconstrained -> natural.
pub(crate) fn decode(layout: &Layout, z: &[f64], theta: &mut [f64]) {
    let (p, k) = (layout.p, layout.k);
    theta[..p].copy_from_slice(&z[..p]);
    theta[p] = z[p].exp();
    for j in 0..p {
        theta[p + 1 + j] = z[p + 1 + j].exp();
    }
    let base = 2 * p + 1;
    let mut remaining = 1.0;
    for i in 0..k - 1 {
        let v = sigmoid(z[base + i]);
        theta[base + i] = v * remaining;
        remaining *= 1.0 - v;
    }
    for i in 0..k - 1 {
        theta[base + (k - 1) + i] = z[base + (k - 1) + i];
        theta[base + 2 * (k - 1) + i] = z[base + 2 * (k - 1) + i].exp();
    }
}

/// Natural -> unconstrained; requires a feasible natural point.
pub(crate) fn encode(layout: &Layout, theta: &[f64]) -> Vec<f64> {
    let (p, k) = (layout.p, layout.k);
    let mut z = vec![0.0; layout.dim()];
    z[..p].copy_from_slice(&theta[..p]);
    z[p] = theta[p].ln();
    for j in 0..p {
        z[p + 1 + j] = theta[p + 1 + j].ln();
    }
    let base = 2 * p + 1;
    let mut remaining = 1.0;
    for i in 0..k - 1 {
        let v = (theta[base + i] / remaining).clamp(1e-12, 1.0 - 1e-12);
        z[base + i] = logit(v);
        remaining *= 1.0 - v;
    }
    for i in 0..k - 1 {
        z[base + (k - 1) + i] = theta[base + (k - 1) + i];
        z[base + 2 * (k - 1) + i] = theta[base + 2 * (k - 1) + i].ln();
    }
    z
}

/// Pulls a natural-coordinate gradient back through the map: `g_z = J^T g_theta`
/// evaluated at the decoded point `theta`.
pub(crate) fn chain_gradient(layout: &Layout, z: &[f64], theta: &[f64], g_theta: &[f64], g_z: &mut [f64]) {
    let (p, k) = (layout.p, layout.k);
    g_z[..p].copy_from_slice(&g_theta[..p]);
    g_z[p] = g_theta[p] * theta[p];
    for j in 0..p {
        g_z[p + 1 + j] = g_theta[p + 1 + j] * theta[p + 1 + j];
    }
    let base = 2 * p + 1;
    // d w_m / d z_i: w_i (1 - v_i) on the diagonal, -w_m v_i for m > i.
    for i in 0..k - 1 {
        let v = sigmoid(z[base + i]);
        let mut acc = g_theta[base + i] * theta[base + i] * (1.0 - v);
        for m in i + 1..k - 1 {
            acc -= g_theta[base + m] * theta[base + m] * v;
        }
        g_z[base + i] = acc;
    }
    for i in 0..k - 1 {
        g_z[base + (k - 1) + i] = g_theta[base + (k - 1) + i];
        g_z[base + 2 * (k - 1) + i] =
            g_theta[base + 2 * (k - 1) + i] * theta[base + 2 * (k - 1) + i];
    }
}
