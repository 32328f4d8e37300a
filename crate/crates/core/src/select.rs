//! Mixture-order selection: information criteria and slope heuristics.
//!
//! For a DAR(p) fit with K components the free-parameter count is
//! `D_K = 2p + 1 + 3(K-1)`. The criteria are
//!
//! ```text
//!   AIC = -2 log L + 2 D_K
//!   BIC = -2 log L + D_K log n
//!   ICL = BIC - 2 sum_{i,k} tau_ik log tau_ik      (0 log 0 := 0)
//! ```
//!
//! with `tau_ik` the posterior component responsibilities of the fitted residuals,
//! so ICL >= BIC always. The two slope heuristics calibrate the penalty constant
//! from the complexity/log-likelihood curve instead of fixing it a priori: DDSE
//! estimates the asymptotic slope of `-log L` against `D_K` over a stable window
//! and doubles it; Djump locates the largest jump of the selected dimension along
//! the penalty path `c -> argmin_K(-log L + c D_K)` and selects with `2 c_jump`.

use thiserror::Error;

use crate::dar::Series;
use crate::estimate::{fit_nmqmle, EstimateError, FitConfig, FitResult};
use crate::mixture::responsibilities;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("invalid K range: {0}")]
    InvalidRange(String),
    #[error("slope heuristics need at least {need} converged rows, table has {have}")]
    InsufficientRows { have: usize, need: usize },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Aic,
    Bic,
    Icl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeMethod {
    Ddse,
    Djump,
}

/// One row of the selection table.
#[derive(Debug, Clone)]
pub struct KRow {
    pub k: usize,
    pub loglik: f64,
    pub d_k: usize,
    pub aic: f64,
    pub bic: f64,
    pub icl: f64,
    pub converged: bool,
}

/// Selection table over a K grid; failed fits keep their row with NaN entries and
/// `converged = false`, and are excluded from every argmin.
#[derive(Debug, Clone)]
pub struct KSelectionTable {
    pub p: usize,
    pub n: usize,
    pub rows: Vec<KRow>,
}

/// Free-parameter count of a DAR(p) fit with K mixture components.
pub fn d_k(p: usize, k: usize) -> usize {
    2 * p + 1 + 3 * (k - 1)
}

/// `(aic, bic, icl)` for a fit on `n` observations of a DAR(p) model.
pub fn information_criteria(fit: &FitResult, n: usize, p: usize) -> (f64, f64, f64) {
    let d = d_k(p, fit.k) as f64;
    let aic = -2.0 * fit.loglik + 2.0 * d;
    let bic = -2.0 * fit.loglik + d * (n as f64).ln();
    let mut entropy = 0.0;
    if fit.k > 1 {
        for row in responsibilities(&fit.mixture, &fit.residuals) {
            for tau in row {
                if tau > 0.0 {
                    entropy -= tau * tau.ln();
                }
            }
        }
    }
    (aic, bic, icl_from(bic, entropy))
}

fn icl_from(bic: f64, entropy: f64) -> f64 {
    bic + 2.0 * entropy
}

impl KSelectionTable {
    /// Argmin of the criterion over converged rows; ties go to the smaller K.
    pub fn chosen(&self, criterion: Criterion) -> Option<usize> {
        let value = |r: &KRow| match criterion {
            Criterion::Aic => r.aic,
            Criterion::Bic => r.bic,
            Criterion::Icl => r.icl,
        };
        let mut best: Option<(f64, usize)> = None;
        for r in self.rows.iter().filter(|r| r.converged) {
            let v = value(r);
            if !v.is_finite() {
                continue;
            }
            match best {
                None => best = Some((v, r.k)),
                Some((bv, bk)) => {
                    if v < bv || (v == bv && r.k < bk) {
                        best = Some((v, r.k));
                    }
                }
            }
        }
        best.map(|(_, k)| k)
    }

    /// CSV rows `k,loglik,d_k,aic,bic,icl,converged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,loglik,d_k,aic,bic,icl,converged\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{}\n",
                r.k, r.loglik, r.d_k, r.aic, r.bic, r.icl, r.converged
            ));
        }
        out
    }

    /// Keyed summary of the chosen K per criterion, including the slope heuristics
    /// when enough rows converged.
    pub fn summary(&self) -> String {
        let fmt = |v: Option<usize>| v.map_or("none".to_string(), |k| k.to_string());
        let mut out = String::new();
        out.push_str(&format!("aic = {}\n", fmt(self.chosen(Criterion::Aic))));
        out.push_str(&format!("bic = {}\n", fmt(self.chosen(Criterion::Bic))));
        out.push_str(&format!("icl = {}\n", fmt(self.chosen(Criterion::Icl))));
        out.push_str(&format!(
            "ddse = {}\n",
            fmt(slope_heuristic(self, SlopeMethod::Ddse).ok())
        ));
        out.push_str(&format!(
            "djump = {}\n",
            fmt(slope_heuristic(self, SlopeMethod::Djump).ok())
        ));
        out
    }
}

/// Fits every K in `k_min..=k_max` and assembles the selection table.
pub fn select_k(
    series: &Series,
    p: usize,
    k_min: usize,
    k_max: usize,
    cfg: &FitConfig,
) -> Result<KSelectionTable, SelectError> {
    if k_min == 0 || k_min > k_max {
        return Err(SelectError::InvalidRange(format!("{k_min}..={k_max}")));
    }
    let n = series.len();
    let fit_cfg = FitConfig { compute_covariance: false, ..cfg.clone() };
    let rows = (k_min..=k_max)
        .map(|k| match fit_nmqmle(series, p, k, &fit_cfg) {
            Ok(fit) => {
                let (aic, bic, icl) = information_criteria(&fit, n, p);
                KRow { k, loglik: fit.loglik, d_k: d_k(p, k), aic, bic, icl, converged: fit.converged }
            }
            Err(_) => KRow {
                k,
                loglik: f64::NAN,
                d_k: d_k(p, k),
                aic: f64::NAN,
                bic: f64::NAN,
                icl: f64::NAN,
                converged: false,
            },
        })
        .collect();
    Ok(KSelectionTable { p, n, rows })
}

/// Relative variation below which successive DDSE slope estimates count as stable.
pub const DDSE_STABILITY: f64 = 0.15;

/// Data-driven penalty selection; see the module docs for both variants.
pub fn slope_heuristic(table: &KSelectionTable, method: SlopeMethod) -> Result<usize, SelectError> {
    slope_heuristic_with(table, method, DDSE_STABILITY)
}

/// [`slope_heuristic`] with an explicit DDSE slope-stability tolerance.
pub fn slope_heuristic_with(
    table: &KSelectionTable,
    method: SlopeMethod,
    stability: f64,
) -> Result<usize, SelectError> {
    let rows: Vec<&KRow> = table
        .rows
        .iter()
        .filter(|r| r.converged && r.loglik.is_finite())
        .collect();
    if rows.len() < 5 {
        return Err(SelectError::InsufficientRows { have: rows.len(), need: 5 });
    }
    match method {
        SlopeMethod::Ddse => Ok(ddse(&rows, stability)),
        SlopeMethod::Djump => Ok(djump(&rows)),
    }
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Penalized argmin over converged rows with ties to the smaller K.
fn penalized_argmin(rows: &[&KRow], penalty: f64) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for r in rows {
        let v = -r.loglik + penalty * r.d_k as f64;
        if v < best.0 || (v == best.0 && r.k < best.1) {
            best = (v, r.k);
        }
    }
    best.1
}

fn ddse(rows: &[&KRow], stability: f64) -> usize {
    let m = rows.len();
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.d_k as f64, -r.loglik)).collect();
    // slopes[i] = least-squares slope over the suffix starting at row i.
    let slopes: Vec<f64> = (0..=m - 2).map(|i| ls_slope(&pts[i..])).collect();
    // Longest suffix (at least 3 rows) whose successive slope estimates agree.
    let stable_from = (0..=m.saturating_sub(3)).find(|&i| {
        (i..slopes.len() - 1)
            .all(|j| (slopes[j] - slopes[j + 1]).abs() <= stability * slopes[j + 1].abs().max(1e-12))
    });
    let idx = stable_from.unwrap_or(m - 3);
    let s_hat = (-slopes[idx]).max(0.0);
    penalized_argmin(rows, 2.0 * s_hat)
}

fn djump(rows: &[&KRow]) -> usize {
    // Breakpoints of c -> argmin(-logL + c D) are the lower-hull slopes of the
    // Pareto frontier of (D, -logL).
    let mut pareto: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        let y = -r.loglik;
        if pareto.last().map_or(true, |&(_, py)| y < py) {
            pareto.push((r.d_k as f64, y));
        }
    }
    // Lower convex hull of the strictly decreasing frontier.
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &pt in &pareto {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // Keep b only if it lies below chord a->pt.
            let cross = (b.0 - a.0) * (pt.1 - a.1) - (pt.0 - a.0) * (b.1 - a.1);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }
    if hull.len() < 2 {
        // Flat table: complexity is never rewarded.
        return rows.iter().map(|r| r.k).min().expect("nonempty rows");
    }
    // Jump sizes and their penalty breakpoints, in decreasing c order.
    let mut c_jump = 0.0f64;
    let mut best_jump = f64::NEG_INFINITY;
    for w in hull.windows(2) {
        let (d0, y0) = w[0];
        let (d1, y1) = w[1];
        let c = (y0 - y1) / (d1 - d0);
        let jump = d1 - d0;
        // Ties pick the larger breakpoint, the conservative choice.
        if jump > best_jump {
            best_jump = jump;
            c_jump = c;
        }
    }
    penalized_argmin(rows, 2.0 * c_jump)
}
