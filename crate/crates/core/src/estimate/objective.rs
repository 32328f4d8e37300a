//! The mixture quasi-log-likelihood, its analytic gradient, and the analytic
//! second-derivative block used as a cross-check.
//!
//! The free parameter vector is laid out as
//!
//! ```text
//!   [phi_1..phi_p, omega, alpha_1..alpha_p, w_1..w_{K-1}, mu_1..mu_{K-1}, s_1..s_{K-1}]
//! ```
//!
//! so its length is d = 2p + 1 + 3(K-1). Derivatives are taken with respect to these
//! natural coordinates; the optimizer chains them through its own reparameterization.
//! Because the last mixture component is determined by the moment constraints, every
//! mixture derivative carries chain terms through `(p_K, mu_K, sigma_K)`.

use crate::dar::Series;
use crate::mixture::{complete_params, MixtureFree, MixtureParams};
use crate::LN_2PI;

use super::fit::FullTheta;
use super::EstimateError;

/// Dimension of the free parameter vector for a DAR(p) fit with K components.
pub(crate) fn theta_dim(p: usize, k: usize) -> usize {
    2 * p + 1 + 3 * (k - 1)
}

/// Flattens structural and free mixture parameters into the natural coordinate vector.
pub(crate) fn pack(theta: &FullTheta) -> Vec<f64> {
    let mut v = Vec::with_capacity(theta_dim(theta.dar.order(), theta.mixture.k()));
    v.extend_from_slice(&theta.dar.phi);
    v.push(theta.dar.omega);
    v.extend_from_slice(&theta.dar.alpha);
    v.extend_from_slice(&theta.mixture.weights);
    v.extend_from_slice(&theta.mixture.means);
    v.extend_from_slice(&theta.mixture.scales);
    v
}

/// Views into one packed coordinate vector.
pub(crate) struct ThetaView<'a> {
    pub phi: &'a [f64],
    pub omega: f64,
    pub alpha: &'a [f64],
    pub wfree: &'a [f64],
    pub mufree: &'a [f64],
    pub sfree: &'a [f64],
}

pub(crate) fn view(theta: &[f64], p: usize, k: usize) -> ThetaView<'_> {
    debug_assert_eq!(theta.len(), theta_dim(p, k));
    ThetaView {
        phi: &theta[..p],
        omega: theta[p],
        alpha: &theta[p + 1..2 * p + 1],
        wfree: &theta[2 * p + 1..2 * p + k],
        mufree: &theta[2 * p + k..2 * p + 2 * k - 1],
        sfree: &theta[2 * p + 2 * k - 1..],
    }
}

/// Derivatives of the completed component with respect to each free coordinate.
struct ChainBlocks {
    dmu_dw: Vec<f64>,
    dsig_dw: Vec<f64>,
    dmu_dmu: Vec<f64>,
    dsig_dmu: Vec<f64>,
    dsig_dsig: Vec<f64>,
}

fn chain_blocks(mix: &MixtureParams) -> ChainBlocks {
    let k = mix.k();
    let last = k - 1;
    let p_last = mix.weights[last];
    let mu_last = mix.means[last];
    let s_last = mix.scales[last];
    let mut blocks = ChainBlocks {
        dmu_dw: vec![0.0; k - 1],
        dsig_dw: vec![0.0; k - 1],
        dmu_dmu: vec![0.0; k - 1],
        dsig_dmu: vec![0.0; k - 1],
        dsig_dsig: vec![0.0; k - 1],
    };
    for i in 0..k - 1 {
        let (w, mu, s) = (mix.weights[i], mix.means[i], mix.scales[i]);
        blocks.dmu_dw[i] = (mu_last - mu) / p_last;
        blocks.dsig_dw[i] = (s_last * s_last - mu_last * mu_last + 2.0 * mu * mu_last
            - (mu * mu + s * s))
            / (2.0 * p_last * s_last);
        blocks.dmu_dmu[i] = -w / p_last;
        blocks.dsig_dmu[i] = w * (mu_last - mu) / (p_last * s_last);
        blocks.dsig_dsig[i] = -w * s / (p_last * s_last);
    }
    blocks
}

/// One evaluation pass over the sample.
///
/// Returns the negative quasi-log-likelihood `-sum W_t`. When `grad_sum` is given it
/// receives `d(sum W_t)/d theta`; `per_row` additionally observes each observation's
/// gradient row (used for the outer-product information matrix). Infeasible points
/// return `+inf` and leave the gradient buffers untouched.
pub(crate) fn eval(
    theta: &[f64],
    y: &[f64],
    p: usize,
    k: usize,
    mut grad_sum: Option<&mut [f64]>,
    mut per_row: Option<&mut dyn FnMut(usize, &[f64])>,
) -> f64 {
    let tv = view(theta, p, k);
    if !(tv.omega > 0.0) || tv.alpha.iter().any(|&a| !(a > 0.0)) {
        return f64::INFINITY;
    }
    let free = match MixtureFree::new(tv.wfree.to_vec(), tv.mufree.to_vec(), tv.sfree.to_vec()) {
        Ok(f) => f,
        Err(_) => return f64::INFINITY,
    };
    let mix = match complete_params(&free) {
        Ok(m) => m,
        Err(_) => return f64::INFINITY,
    };
    let want_grad = grad_sum.is_some() || per_row.is_some();
    let blocks = if want_grad && k > 1 { Some(chain_blocks(&mix)) } else { None };
    if let Some(g) = grad_sum.as_deref_mut() {
        g.fill(0.0);
    }

    let d = theta_dim(p, k);
    let last = k - 1;
    let ln_w: Vec<f64> = mix.weights.iter().map(|w| w.ln()).collect();
    let ln_s: Vec<f64> = mix.scales.iter().map(|s| s.ln()).collect();
    let inv_var: Vec<f64> = mix.scales.iter().map(|s| 1.0 / (s * s)).collect();
    let mut comp = vec![0.0f64; k];
    let mut resp = vec![0.0f64; k];
    let mut row = vec![0.0f64; d];
    let mut neg = 0.0f64;

    for i in p..y.len() {
        let mut m = 0.0;
        let mut h = tv.omega;
        for j in 0..p {
            let yl = y[i - 1 - j];
            m += tv.phi[j] * yl;
            h += tv.alpha[j] * yl * yl;
        }
        let sqrt_h = h.sqrt();
        let z = (y[i] - m) / sqrt_h;

        let mut max = f64::NEG_INFINITY;
        for c in 0..k {
            let u = (z - mix.means[c]) / mix.scales[c];
            let t = ln_w[c] - ln_s[c] - 0.5 * (LN_2PI + u * u);
            comp[c] = t;
            if t > max {
                max = t;
            }
        }
        let mut sum = 0.0;
        for c in 0..k {
            resp[c] = (comp[c] - max).exp();
            sum += resp[c];
        }
        let lse = max + sum.ln();
        // W_t = -log(h)/2 + log G; accumulate its negative.
        neg += 0.5 * h.ln() - lse;

        if !want_grad {
            continue;
        }
        for c in 0..k {
            resp[c] /= sum;
        }
        // s1 = sum_c r_c (z - mu_c)/sigma_c^2 drives every structural derivative.
        let mut s1 = 0.0;
        for c in 0..k {
            s1 += resp[c] * (z - mix.means[c]) * inv_var[c];
        }
        let bracket = (z * s1 - 1.0) / (2.0 * h);
        for j in 0..p {
            let yl = y[i - 1 - j];
            row[j] = yl * s1 / sqrt_h;
            row[p + 1 + j] = yl * yl * bracket;
        }
        row[p] = bracket;

        if k > 1 {
            let blocks = blocks.as_ref().expect("blocks computed for k > 1");
            let r_last = resp[last];
            let a_last = (z - mix.means[last]) * inv_var[last];
            let zl = (z - mix.means[last]) / mix.scales[last];
            let b_last = (zl * zl - 1.0) / mix.scales[last];
            let base = 2 * p + 1;
            for c in 0..k - 1 {
                let a_c = (z - mix.means[c]) * inv_var[c];
                let zc = (z - mix.means[c]) / mix.scales[c];
                let b_c = (zc * zc - 1.0) / mix.scales[c];
                row[base + c] = resp[c] / mix.weights[c] - r_last / mix.weights[last]
                    + r_last * (a_last * blocks.dmu_dw[c] + b_last * blocks.dsig_dw[c]);
                row[base + (k - 1) + c] = resp[c] * a_c
                    + r_last * (a_last * blocks.dmu_dmu[c] + b_last * blocks.dsig_dmu[c]);
                row[base + 2 * (k - 1) + c] =
                    resp[c] * b_c + r_last * b_last * blocks.dsig_dsig[c];
            }
        }

        if let Some(g) = grad_sum.as_deref_mut() {
            for j in 0..d {
                g[j] += row[j];
            }
        }
        if let Some(f) = per_row.as_deref_mut() {
            f(i, &row);
        }
    }
    neg
}

/// Negative quasi-log-likelihood `-sum_{t=p+1}^n W_t` at a parameter point, `+inf`
/// when the point is infeasible. Conditions on the first `p` observations of
/// `series.values`; the presample is never consulted.
pub fn neg_quasi_loglik(theta: &FullTheta, series: &Series) -> f64 {
    eval(
        &pack(theta),
        &series.values,
        theta.dar.order(),
        theta.mixture.k(),
        None,
        None,
    )
}

/// Analytic gradient of `sum_t W_t` with respect to the natural free coordinates.
pub fn score(theta: &FullTheta, series: &Series) -> Result<Vec<f64>, EstimateError> {
    let p = theta.dar.order();
    let k = theta.mixture.k();
    let mut grad = vec![0.0; theta_dim(p, k)];
    let f = eval(&pack(theta), &series.values, p, k, Some(&mut grad), None);
    if !f.is_finite() {
        return Err(EstimateError::Infeasible(
            "objective is not finite at this point".into(),
        ));
    }
    Ok(grad)
}

/// Analytic Hessian of `sum_t W_t` restricted to the structural block
/// `(phi, omega, alpha)`, with the mixture coordinates held fixed.
///
/// Writing `u = d log G / d z` and `v = d^2 log G / d z^2` at the standardized
/// residual `z`, and `m_a`, `h_a` for the derivatives of the conditional moments,
///
/// ```text
///   d2 W / da db = h_a h_b / (2 h^2) + v z_a z_b + u z_ab,
///   z_a  = -m_a/sqrt(h) - z h_a/(2h),
///   z_ab = (m_a h_b + m_b h_a)/(2 h^(3/2)) + 3 z h_a h_b/(4 h^2),
/// ```
///
/// since `m` is linear in `phi` and `h` is linear in `(omega, alpha)`. Serves as an
/// independent check on the numeric Hessian used by the sandwich covariance.
pub fn theta1_hessian_block(
    theta: &FullTheta,
    series: &Series,
) -> Result<Vec<Vec<f64>>, EstimateError> {
    let p = theta.dar.order();
    let k = theta.mixture.k();
    let mix = complete_params(&theta.mixture)?;
    let y = &series.values;
    let dim = 2 * p + 1;
    let inv_var: Vec<f64> = mix.scales.iter().map(|s| 1.0 / (s * s)).collect();
    let ln_w: Vec<f64> = mix.weights.iter().map(|w| w.ln()).collect();
    let ln_s: Vec<f64> = mix.scales.iter().map(|s| s.ln()).collect();
    let mut hess = vec![vec![0.0f64; dim]; dim];
    let mut comp = vec![0.0f64; k];
    let mut resp = vec![0.0f64; k];
    // Coordinate a has m_a = y_{t-1-j} (phi), h_a = 1 (omega) or y^2 (alpha).
    let mut m_d = vec![0.0f64; dim];
    let mut h_d = vec![0.0f64; dim];

    for i in p..y.len() {
        let mut m = 0.0;
        let mut h = theta.dar.omega;
        for j in 0..p {
            let yl = y[i - 1 - j];
            m += theta.dar.phi[j] * yl;
            h += theta.dar.alpha[j] * yl * yl;
            m_d[j] = yl;
            h_d[j] = 0.0;
            m_d[p + 1 + j] = 0.0;
            h_d[p + 1 + j] = yl * yl;
        }
        m_d[p] = 0.0;
        h_d[p] = 1.0;
        let sqrt_h = h.sqrt();
        let z = (y[i] - m) / sqrt_h;

        let mut max = f64::NEG_INFINITY;
        for c in 0..k {
            let u = (z - mix.means[c]) / mix.scales[c];
            comp[c] = ln_w[c] - ln_s[c] - 0.5 * (LN_2PI + u * u);
            max = max.max(comp[c]);
        }
        let mut sum = 0.0;
        for c in 0..k {
            resp[c] = (comp[c] - max).exp();
            sum += resp[c];
        }
        for c in 0..k {
            resp[c] /= sum;
        }
        let mut s1 = 0.0;
        let mut g2 = 0.0;
        for c in 0..k {
            let dev = (z - mix.means[c]) * inv_var[c];
            s1 += resp[c] * dev;
            g2 += resp[c] * (dev * dev - inv_var[c]);
        }
        let u = -s1;
        let v = g2 - u * u;

        for a in 0..dim {
            let za = -m_d[a] / sqrt_h - z * h_d[a] / (2.0 * h);
            for b in a..dim {
                let zb = -m_d[b] / sqrt_h - z * h_d[b] / (2.0 * h);
                let zab = (m_d[a] * h_d[b] + m_d[b] * h_d[a]) / (2.0 * h * sqrt_h)
                    + 0.75 * z * h_d[a] * h_d[b] / (h * h);
                let term = h_d[a] * h_d[b] / (2.0 * h * h) + v * za * zb + u * zab;
                hess[a][b] += term;
                if b != a {
                    hess[b][a] += term;
                }
            }
        }
    }
    Ok(hess)
}

/// Gradient rows per observation at a feasible point: `(neg_loglik, rows)` with one
/// row of `d W_t / d theta` for each `t = p+1..n`.
pub(crate) fn per_obs_scores(
    theta: &[f64],
    y: &[f64],
    p: usize,
    k: usize,
) -> Option<(f64, Vec<Vec<f64>>)> {
    let mut rows = Vec::with_capacity(y.len().saturating_sub(p));
    let f = eval(theta, y, p, k, None, Some(&mut |_i, row: &[f64]| rows.push(row.to_vec())));
    if f.is_finite() {
        Some((f, rows))
    } else {
        None
    }
}
