//! Sandwich (robust) covariance of the fitted free coordinates.
//!
//! With `W_t` the per-observation quasi-log-likelihood terms and `n* = n - p`,
//!
//! ```text
//!   H = -(1/n*) sum_t d2 W_t / d theta d theta',
//!   J =  (1/n*) sum_t (d W_t / d theta)(d W_t / d theta)',
//!   cov(theta-hat) = H^-1 J H^-1 / n*.
//! ```
//!
//! `J` uses the analytic per-observation scores. `H` differences those same analytic
//! scores centrally with per-coordinate steps `1e-4 * max(1, |theta_i|)`, then
//! symmetrizes; differencing the exact gradient is far better conditioned than
//! double-differencing the objective. A spectral condition number above `1e12`
//! reports [`EstimateError::SingularHessian`].

use nalgebra::DMatrix;

use crate::dar::Series;

use super::fit::FullTheta;
use super::objective::{eval, pack, per_obs_scores, theta_dim};
use super::EstimateError;

const MAX_CONDITION: f64 = 1e12;

/// Covariance matrix and standard errors of the natural free coordinates.
pub fn sandwich_covariance(
    theta: &FullTheta,
    series: &Series,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), EstimateError> {
    let p = theta.dar.order();
    let k = theta.mixture.k();
    let d = theta_dim(p, k);
    let packed = pack(theta);
    let y = &series.values;
    let n_used = y.len().saturating_sub(p);
    if n_used < d + 2 {
        return Err(EstimateError::TooShort { n: y.len(), p, k, need: p + d + 2 });
    }

    let (_, rows) = per_obs_scores(&packed, y, p, k).ok_or_else(|| {
        EstimateError::Infeasible("covariance requested at an infeasible point".into())
    })?;
    let mut j = DMatrix::<f64>::zeros(d, d);
    for row in &rows {
        for a in 0..d {
            for b in 0..d {
                j[(a, b)] += row[a] * row[b];
            }
        }
    }
    j /= n_used as f64;

    // Central differences of the analytic score give -n* H column by column.
    let mut h = DMatrix::<f64>::zeros(d, d);
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    for i in 0..d {
        let step = 1e-4 * packed[i].abs().max(1.0);
        let mut plus = packed.clone();
        let mut minus = packed.clone();
        plus[i] += step;
        minus[i] -= step;
        let fp = eval(&plus, y, p, k, Some(&mut gp), None);
        let fm = eval(&minus, y, p, k, Some(&mut gm), None);
        if !fp.is_finite() || !fm.is_finite() {
            return Err(EstimateError::SingularHessian(format!(
                "curvature step on coordinate {i} left the feasible set"
            )));
        }
        for a in 0..d {
            h[(a, i)] = -(gp[a] - gm[a]) / (2.0 * step) / n_used as f64;
        }
    }
    // Symmetrize rounding noise away.
    let h = (h.clone() + h.transpose()) * 0.5;

    let svd = h.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > MAX_CONDITION {
        return Err(EstimateError::SingularHessian(format!(
            "condition number {:.3e} exceeds {MAX_CONDITION:.0e}",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    let hinv = h
        .lu()
        .try_inverse()
        .ok_or_else(|| EstimateError::SingularHessian("inversion failed".into()))?;
    let cov = (&hinv * &j * &hinv) / n_used as f64;
    let cov = (cov.clone() + cov.transpose()) * 0.5;

    let mut se = Vec::with_capacity(d);
    for i in 0..d {
        let v = cov[(i, i)];
        if v < -1e-10 {
            return Err(EstimateError::SingularHessian(format!(
                "negative variance {v:.3e} on coordinate {i}"
            )));
        }
        se.push(v.max(0.0).sqrt());
    }
    let cov_rows = (0..d)
        .map(|a| (0..d).map(|b| cov[(a, b)]).collect())
        .collect();
    Ok((cov_rows, se))
}
