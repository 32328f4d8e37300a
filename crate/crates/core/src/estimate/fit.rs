//! Multi-start fitting front ends: mixture QMLE, Gaussian QMLE, and known-density MLE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dar::{DarParams, Series};
use crate::innovations::{log_pdf, InnovationSpec};
use crate::mixture::{complete_params, responsibilities, MixtureFree, MixtureParams};

use super::objective::{self, eval, pack, theta_dim};
use super::optim::{bfgs, BfgsOptions, BfgsOutcome};
use super::sandwich::sandwich_covariance;
use super::transform::{chain_gradient, decode, encode, Layout};
use super::EstimateError;

/// Structural parameters plus the free mixture coordinates of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct FullTheta {
    pub dar: DarParams,
    pub mixture: MixtureFree,
}

impl FullTheta {
    /// Coordinate names in packed order: `phi1.., omega, alpha1.., w1.., mu1.., s1..`.
    pub fn coordinate_names(&self) -> Vec<String> {
        let p = self.dar.order();
        let k = self.mixture.k();
        let mut names = Vec::with_capacity(theta_dim(p, k));
        for j in 1..=p {
            names.push(format!("phi{j}"));
        }
        names.push("omega".into());
        for j in 1..=p {
            names.push(format!("alpha{j}"));
        }
        for i in 1..k {
            names.push(format!("w{i}"));
        }
        for i in 1..k {
            names.push(format!("mu{i}"));
        }
        for i in 1..k {
            names.push(format!("s{i}"));
        }
        names
    }
}

/// Optimizer and restart policy shared by every estimator.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Random restarts; the first uses undisturbed seeds, the rest jitter them.
    pub starts: usize,
    pub max_iter: usize,
    /// Success when the unconstrained gradient satisfies
    /// `||g||_inf < tol_grad * max(1, |objective|)`.
    pub tol_grad: f64,
    /// Stall when the relative step falls below this.
    pub tol_step: f64,
    /// Drives start jitter and EM initialization only.
    pub seed: u64,
    /// EM sweeps used to seed the mixture coordinates.
    pub em_iters: usize,
    pub phi_abs_max: f64,
    pub omega_bounds: (f64, f64),
    pub alpha_bounds: (f64, f64),
    /// Hard floor on every free mixture scale during optimization.
    pub scale_floor: f64,
    /// Attach the sandwich covariance to the result when the Hessian allows it.
    pub compute_covariance: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iter: 500,
            tol_grad: 1e-6,
            tol_step: 1e-9,
            seed: 0,
            em_iters: 60,
            phi_abs_max: 10.0,
            omega_bounds: (1e-6, 1e6),
            alpha_bounds: (1e-8, 1e6),
            scale_floor: 1e-4,
            compute_covariance: true,
        }
    }
}

/// A fitted model with its diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: FullTheta,
    /// Completed mixture implied by `theta.mixture`.
    pub mixture: MixtureParams,
    pub k: usize,
    pub neg_loglik: f64,
    pub loglik: f64,
    pub converged: bool,
    /// Restarts that reached a finite objective.
    pub n_restarts_used: usize,
    /// Effective sample size `n - p`.
    pub n_used: usize,
    /// Standardized residuals at the fit for `t = p+1..n`.
    pub residuals: Vec<f64>,
    /// Sandwich covariance of the free coordinates, when requested and nonsingular.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub std_errors: Option<Vec<f64>>,
    /// Infinity norm of the unconstrained gradient at the fit.
    pub grad_norm: f64,
    /// Mean posterior component mass over the residuals.
    pub responsibilities_mean: Vec<f64>,
}

impl FitResult {
    /// Keyed-text summary, one `key = value` per line.
    pub fn to_keyed_text(&self) -> String {
        let join = |v: &[f64]| {
            v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
        };
        let mut out = String::new();
        out.push_str(&format!("p = {}\n", self.theta.dar.order()));
        out.push_str(&format!("k = {}\n", self.k));
        out.push_str(&format!("n_used = {}\n", self.n_used));
        out.push_str(&format!("neg_loglik = {:.16e}\n", self.neg_loglik));
        out.push_str(&format!("converged = {}\n", self.converged));
        out.push_str(&format!("n_restarts_used = {}\n", self.n_restarts_used));
        out.push_str(&format!("grad_norm = {:.16e}\n", self.grad_norm));
        out.push_str(&format!("phi = {}\n", join(&self.theta.dar.phi)));
        out.push_str(&format!("omega = {:.16e}\n", self.theta.dar.omega));
        out.push_str(&format!("alpha = {}\n", join(&self.theta.dar.alpha)));
        out.push_str(&format!("mixture = {}\n", self.mixture.to_record()));
        out.push_str(&format!(
            "responsibilities_mean = {}\n",
            join(&self.responsibilities_mean)
        ));
        out
    }

    /// Coefficient table `name,estimate,std_error`; the error column is empty when
    /// no covariance is attached.
    pub fn coefficients_csv(&self) -> String {
        let names = self.theta.coordinate_names();
        let values = pack(&self.theta);
        let mut out = String::from("name,estimate,std_error\n");
        for (i, name) in names.iter().enumerate() {
            match &self.std_errors {
                Some(se) => out.push_str(&format!("{name},{:.16e},{:.16e}\n", values[i], se[i])),
                None => out.push_str(&format!("{name},{:.16e},\n", values[i])),
            }
        }
        out
    }
}

fn validate(series: &Series, p: usize, k: usize, label: &str) -> Result<(), EstimateError> {
    if p == 0 {
        return Err(EstimateError::InvalidConfig(format!("{label}: order must be positive")));
    }
    if k == 0 {
        return Err(EstimateError::InvalidConfig(format!(
            "{label}: at least one mixture component is required"
        )));
    }
    let n = series.len();
    let need = p + theta_dim(p, k) + 2;
    if n < need {
        return Err(EstimateError::TooShort { n, p, k, need });
    }
    Ok(())
}

/// Least-squares autoregression start: `phi` from the normal equations, the residual
/// variance split evenly between `omega` and the `alpha` terms.
fn ols_start(y: &[f64], p: usize) -> (Vec<f64>, f64, Vec<f64>) {
    let n = y.len();
    let rows = n - p;
    let mut xtx = nalgebra::DMatrix::<f64>::zeros(p, p);
    let mut xty = nalgebra::DVector::<f64>::zeros(p);
    for i in p..n {
        for a in 0..p {
            xty[a] += y[i - 1 - a] * y[i];
            for b in 0..p {
                xtx[(a, b)] += y[i - 1 - a] * y[i - 1 - b];
            }
        }
    }
    let phi = xtx
        .clone()
        .lu()
        .solve(&xty)
        .map(|v| v.iter().cloned().collect::<Vec<f64>>())
        .unwrap_or_else(|| vec![0.0; p]);
    let mut ssr = 0.0;
    for i in p..n {
        let mut m = 0.0;
        for a in 0..p {
            m += phi[a] * y[i - 1 - a];
        }
        ssr += (y[i] - m) * (y[i] - m);
    }
    let v = (ssr / rows as f64).max(1e-8);
    let y2 = (y.iter().map(|x| x * x).sum::<f64>() / n as f64).max(1e-8);
    let omega = 0.5 * v;
    let alpha = vec![0.5 * v / (p as f64 * y2); p];
    (phi, omega, alpha)
}

/// Standardized residuals of `y[p..]` under structural parameters alone.
fn structural_residuals(y: &[f64], phi: &[f64], omega: f64, alpha: &[f64]) -> Vec<f64> {
    let p = phi.len();
    (p..y.len())
        .map(|i| {
            let mut m = 0.0;
            let mut h = omega;
            for j in 0..p {
                let yl = y[i - 1 - j];
                m += phi[j] * yl;
                h += alpha[j] * yl * yl;
            }
            (y[i] - m) / h.sqrt()
        })
        .collect()
}

/// Plain unconstrained EM for a K-component univariate normal mixture; returns
/// weights, means and scales. `pick_random` selects data points as initial means
/// instead of evenly spread quantiles.
fn em_mixture(
    data: &[f64],
    k: usize,
    iters: usize,
    rng: &mut ChaCha8Rng,
    pick_random: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = data.len();
    let mean = data.iter().sum::<f64>() / n as f64;
    let sd = (data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64)
        .sqrt()
        .max(1e-6);
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut means: Vec<f64> = (0..k)
        .map(|c| {
            if pick_random {
                sorted[rng.gen_range(0..n)]
            } else {
                let q = (c as f64 + 0.5) / k as f64;
                sorted[((q * n as f64) as usize).min(n - 1)]
            }
        })
        .collect();
    let mut weights = vec![1.0 / k as f64; k];
    let mut vars = vec![sd * sd; k];
    let floor = (0.05 * sd) * (0.05 * sd);

    let mut resp = vec![0.0f64; k];
    let mut sums = vec![0.0f64; k];
    let mut sums_x = vec![0.0f64; k];
    let mut sums_xx = vec![0.0f64; k];
    for _ in 0..iters {
        sums.fill(0.0);
        sums_x.fill(0.0);
        sums_xx.fill(0.0);
        for &x in data {
            let mut max = f64::NEG_INFINITY;
            for c in 0..k {
                let z = (x - means[c]) * (x - means[c]) / vars[c];
                resp[c] = weights[c].ln() - 0.5 * vars[c].ln() - 0.5 * z;
                max = max.max(resp[c]);
            }
            let mut tot = 0.0;
            for c in 0..k {
                resp[c] = (resp[c] - max).exp();
                tot += resp[c];
            }
            for c in 0..k {
                let r = resp[c] / tot;
                sums[c] += r;
                sums_x[c] += r * x;
            }
        }
        for c in 0..k {
            let w = (sums[c] / n as f64).max(1e-6);
            let mu = if sums[c] > 0.0 { sums_x[c] / sums[c] } else { means[c] };
            weights[c] = w;
            means[c] = mu;
        }
        // Second pass for variances around the fresh means.
        for &x in data {
            let mut max = f64::NEG_INFINITY;
            for c in 0..k {
                let z = (x - means[c]) * (x - means[c]) / vars[c];
                resp[c] = weights[c].ln() - 0.5 * vars[c].ln() - 0.5 * z;
                max = max.max(resp[c]);
            }
            let mut tot = 0.0;
            for c in 0..k {
                resp[c] = (resp[c] - max).exp();
                tot += resp[c];
            }
            for c in 0..k {
                let r = resp[c] / tot;
                sums_xx[c] += r * (x - means[c]) * (x - means[c]);
            }
        }
        for c in 0..k {
            vars[c] = (sums_xx[c] / (sums[c].max(1e-12))).max(floor);
            sums_xx[c] = 0.0;
        }
        let tot: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= tot;
        }
    }
    let scales = vars.iter().map(|v| v.sqrt()).collect();
    (weights, means, scales)
}

/// Projects raw mixture components onto the moment constraints and returns the free
/// coordinates, with components sorted by mean for deterministic labeling.
fn constrained_free(
    weights: &[f64],
    means: &[f64],
    scales: &[f64],
    scale_floor: f64,
) -> Option<MixtureFree> {
    let std = MixtureParams::standardized(weights, means, scales).ok()?;
    let mut order: Vec<usize> = (0..std.k()).collect();
    order.sort_by(|&a, &b| std.means[a].partial_cmp(&std.means[b]).unwrap());
    let w: Vec<f64> = order.iter().map(|&i| std.weights[i]).collect();
    let m: Vec<f64> = order.iter().map(|&i| std.means[i]).collect();
    let s: Vec<f64> = order
        .iter()
        .map(|&i| std.scales[i].max(2.0 * scale_floor))
        .collect();
    // Re-standardize after flooring so the completion stays exact.
    let std = MixtureParams::standardized(&w, &m, &s).ok()?;
    let free = std.to_free();
    complete_params(&free).ok()?;
    Some(free)
}

struct Candidate {
    outcome: BfgsOutcome,
}

/// Shared multi-start BFGS over the unconstrained space.
fn optimize_starts(
    y: &[f64],
    p: usize,
    k: usize,
    cfg: &FitConfig,
    starts: Vec<Vec<f64>>,
) -> Result<(Candidate, usize), EstimateError> {
    let layout = Layout { p, k };
    let dim = layout.dim();
    let opts = BfgsOptions { max_iter: cfg.max_iter, tol_grad: cfg.tol_grad, tol_step: cfg.tol_step };
    let mut theta = vec![0.0; dim];
    let mut g_theta = vec![0.0; dim];
    let mut best: Option<Candidate> = None;
    let mut finite = 0usize;

    for z0 in starts {
        let outcome = bfgs(
            z0,
            |z, gz| {
                decode(&layout, z, &mut theta);
                if theta[..p].iter().any(|v| v.abs() > cfg.phi_abs_max)
                    || theta[p] < cfg.omega_bounds.0
                    || theta[p] > cfg.omega_bounds.1
                    || theta[p + 1..2 * p + 1]
                        .iter()
                        .any(|&a| a < cfg.alpha_bounds.0 || a > cfg.alpha_bounds.1)
                    || theta[2 * p + 1 + 2 * (k - 1)..]
                        .iter()
                        .any(|&s| s < cfg.scale_floor)
                {
                    return f64::INFINITY;
                }
                let f = eval(&theta, y, p, k, Some(&mut g_theta), None);
                if !f.is_finite() {
                    return f64::INFINITY;
                }
                // eval's gradient is d(sum W)/d theta; we minimize -sum W.
                for v in g_theta.iter_mut() {
                    *v = -*v;
                }
                chain_gradient(&layout, z, &theta, &g_theta, gz);
                f
            },
            &opts,
        );
        if !outcome.f.is_finite() {
            continue;
        }
        finite += 1;
        let better = match &best {
            None => true,
            Some(b) => {
                outcome.f < b.outcome.f
                    || (outcome.f == b.outcome.f && outcome.grad_norm < b.outcome.grad_norm)
            }
        };
        if better {
            best = Some(Candidate { outcome });
        }
    }
    best.map(|b| (b, finite)).ok_or(EstimateError::AllStartsFailed)
}

fn jitter_structural(
    phi: &[f64],
    omega: f64,
    alpha: &[f64],
    cfg: &FitConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64, Vec<f64>) {
    let normal = StandardNormal;
    let phi_j: Vec<f64> = phi
        .iter()
        .map(|&v| {
            let e: f64 = normal.sample(rng);
            (v + 0.05 * (1.0 + v.abs()) * e).clamp(-cfg.phi_abs_max * 0.99, cfg.phi_abs_max * 0.99)
        })
        .collect();
    let e: f64 = normal.sample(rng);
    let omega_j = (omega * (0.3 * e).exp()).clamp(cfg.omega_bounds.0 * 10.0, cfg.omega_bounds.1 * 0.1);
    let alpha_j: Vec<f64> = alpha
        .iter()
        .map(|&v| {
            let e: f64 = normal.sample(rng);
            (v * (0.3 * e).exp()).clamp(cfg.alpha_bounds.0 * 10.0, cfg.alpha_bounds.1 * 0.1)
        })
        .collect();
    (phi_j, omega_j, alpha_j)
}

/// Builds the packed natural start vector for restart `s`.
fn build_start(
    s: usize,
    y: &[f64],
    k: usize,
    base: &(Vec<f64>, f64, Vec<f64>),
    cfg: &FitConfig,
) -> Option<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(s as u64 + 1)));
    let (phi, omega, alpha) = if s == 0 {
        base.clone()
    } else {
        jitter_structural(&base.0, base.1, &base.2, cfg, &mut rng)
    };
    let mixture = if k == 1 {
        MixtureFree::standard_normal()
    } else {
        let resid = structural_residuals(y, &phi, omega, &alpha);
        let (w, m, sc) = em_mixture(&resid, k, cfg.em_iters, &mut rng, s % 2 == 1);
        match constrained_free(&w, &m, &sc, cfg.scale_floor) {
            Some(f) => f,
            None => {
                // Fall back to a symmetric spread start.
                let spread: Vec<f64> = (0..k).map(|c| c as f64 - (k as f64 - 1.0) / 2.0).collect();
                let w = vec![1.0; k];
                let sc = vec![0.8; k];
                constrained_free(&w, &spread, &sc, cfg.scale_floor)?
            }
        }
    };
    let theta = FullTheta {
        dar: DarParams::new(phi, omega, alpha).ok()?,
        mixture,
    };
    Some(pack(&theta))
}

fn finish(
    series: &Series,
    p: usize,
    k: usize,
    cfg: &FitConfig,
    cand: Candidate,
    finite_starts: usize,
) -> Result<FitResult, EstimateError> {
    let layout = Layout { p, k };
    let mut theta_vec = vec![0.0; layout.dim()];
    decode(&layout, &cand.outcome.x, &mut theta_vec);
    let tv = objective::view(&theta_vec, p, k);
    let theta = FullTheta {
        dar: DarParams::new(tv.phi.to_vec(), tv.omega, tv.alpha.to_vec())
            .map_err(EstimateError::Dar)?,
        mixture: MixtureFree::new(tv.wfree.to_vec(), tv.mufree.to_vec(), tv.sfree.to_vec())
            .map_err(EstimateError::Mixture)?,
    };
    let mixture = complete_params(&theta.mixture)?;
    let resid =
        structural_residuals(&series.values, &theta.dar.phi, theta.dar.omega, &theta.dar.alpha);
    let resp = responsibilities(&mixture, &resid);
    let mut resp_mean = vec![0.0; k];
    for row in &resp {
        for (c, &r) in row.iter().enumerate() {
            resp_mean[c] += r;
        }
    }
    for v in resp_mean.iter_mut() {
        *v /= resid.len().max(1) as f64;
    }
    let (covariance, std_errors) = if cfg.compute_covariance {
        match sandwich_covariance(&theta, series) {
            Ok((cov, se)) => (Some(cov), Some(se)),
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    Ok(FitResult {
        k,
        neg_loglik: cand.outcome.f,
        loglik: -cand.outcome.f,
        converged: cand.outcome.converged,
        n_restarts_used: finite_starts,
        n_used: series.len() - p,
        residuals: resid,
        covariance,
        std_errors,
        grad_norm: cand.outcome.grad_norm,
        responsibilities_mean: resp_mean,
        mixture,
        theta,
    })
}

/// Fits a DAR(p) model by normal-mixture QMLE with K components.
pub fn fit_nmqmle(
    series: &Series,
    p: usize,
    k: usize,
    cfg: &FitConfig,
) -> Result<FitResult, EstimateError> {
    validate(series, p, k, "nmqmle")?;
    let y = &series.values;
    let layout = Layout { p, k };

    // Stage one: structural seed from least squares, refined at K = 1.
    let base = ols_start(y, p);
    let base = if k > 1 {
        let g = fit_gaussian_qmle(series, p, &FitConfig { compute_covariance: false, ..cfg.clone() })?;
        (g.theta.dar.phi.clone(), g.theta.dar.omega, g.theta.dar.alpha.clone())
    } else {
        base
    };

    let starts: Vec<Vec<f64>> = (0..cfg.starts.max(1))
        .filter_map(|s| build_start(s, y, k, &base, cfg))
        .map(|nat| encode(&layout, &nat))
        .collect();
    if starts.is_empty() {
        return Err(EstimateError::AllStartsFailed);
    }
    let (cand, finite) = optimize_starts(y, p, k, cfg, starts)?;
    finish(series, p, k, cfg, cand, finite)
}

/// Gaussian QMLE: exactly the K = 1 mixture fit.
pub fn fit_gaussian_qmle(
    series: &Series,
    p: usize,
    cfg: &FitConfig,
) -> Result<FitResult, EstimateError> {
    validate(series, p, 1, "gaussian qmle")?;
    let y = &series.values;
    let layout = Layout { p, k: 1 };
    let base = ols_start(y, p);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for s in 0..cfg.starts.max(1) {
        // Two deterministic rescalings bracket the least-squares split before the
        // jittered restarts begin.
        let nat = match s {
            0 => build_start(0, y, 1, &base, cfg),
            1 => build_start(
                0,
                y,
                1,
                &(base.0.clone(), base.1 * 4.0, base.2.iter().map(|a| a * 0.25).collect()),
                cfg,
            ),
            2 => build_start(
                0,
                y,
                1,
                &(base.0.clone(), base.1 * 0.25, base.2.iter().map(|a| a * 4.0).collect()),
                cfg,
            ),
            _ => build_start(s, y, 1, &base, cfg),
        };
        if let Some(n) = nat {
            starts.push(encode(&layout, &n));
        }
    }
    if starts.is_empty() {
        return Err(EstimateError::AllStartsFailed);
    }
    let (cand, finite) = optimize_starts(y, p, 1, cfg, starts)?;
    finish(series, p, 1, cfg, cand, finite)
}

/// Two-stage baseline: the autoregressive coefficients come from unweighted least
/// squares, then the volatility parameters maximize the Gaussian likelihood of the
/// least-squares residuals with the mean held fixed. This is the conventional
/// fit-an-autoregression-then-a-volatility-model pipeline. Because the mean stage
/// weights all observations equally instead of down-weighting high-variance ones,
/// it loses efficiency against the one-step estimators when innovations are heavy
/// tailed; it is provided as a comparison benchmark for exactly that contrast.
///
/// `grad_norm` and `converged` describe the volatility stage only (the mean stage
/// is a closed-form solve). No covariance is attached: the one-step sandwich does
/// not account for the frozen mean coefficients.
pub fn fit_two_stage_qmle(
    series: &Series,
    p: usize,
    cfg: &FitConfig,
) -> Result<FitResult, EstimateError> {
    validate(series, p, 1, "two stage qmle")?;
    let y = &series.values;
    let n = y.len();
    let base = ols_start(y, p);
    let phi = base.0.clone();

    // Residuals of the frozen mean stage, aligned with t = p..n.
    let resid: Vec<f64> = (p..n)
        .map(|i| {
            let mut m = 0.0;
            for j in 0..p {
                m += phi[j] * y[i - 1 - j];
            }
            y[i] - m
        })
        .collect();

    // Volatility stage over z = (log omega, log alpha_1..log alpha_p).
    let dim = p + 1;
    let mut objective = |z: &[f64], gz: &mut [f64]| -> f64 {
        let omega = z[0].exp();
        if omega < cfg.omega_bounds.0 || omega > cfg.omega_bounds.1 {
            return f64::INFINITY;
        }
        let mut alpha = vec![0.0; p];
        for j in 0..p {
            alpha[j] = z[j + 1].exp();
            if alpha[j] < cfg.alpha_bounds.0 || alpha[j] > cfg.alpha_bounds.1 {
                return f64::INFINITY;
            }
        }
        let mut f = 0.0;
        gz.fill(0.0);
        for (row, &e) in resid.iter().enumerate() {
            let i = row + p;
            let mut h = omega;
            for j in 0..p {
                let yl = y[i - 1 - j];
                h += alpha[j] * yl * yl;
            }
            f += 0.5 * h.ln() + e * e / (2.0 * h);
            let dh = (1.0 - e * e / h) / (2.0 * h);
            gz[0] += dh * omega;
            for j in 0..p {
                let yl = y[i - 1 - j];
                gz[j + 1] += dh * alpha[j] * yl * yl;
            }
        }
        if f.is_finite() {
            f
        } else {
            f64::INFINITY
        }
    };

    let to_z = |omega: f64, alpha: &[f64]| -> Vec<f64> {
        let mut z = Vec::with_capacity(dim);
        z.push(omega.ln());
        z.extend(alpha.iter().map(|a| a.ln()));
        z
    };
    let mut starts = vec![to_z(base.1, &base.2)];
    starts.push(to_z(base.1 * 4.0, &base.2.iter().map(|a| a * 0.25).collect::<Vec<_>>()));
    starts.push(to_z(base.1 * 0.25, &base.2.iter().map(|a| a * 4.0).collect::<Vec<_>>()));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    while starts.len() < cfg.starts.max(1) {
        let (_, omega_j, alpha_j) = jitter_structural(&phi, base.1, &base.2, cfg, &mut rng);
        starts.push(to_z(omega_j, &alpha_j));
    }

    let opts = BfgsOptions { max_iter: cfg.max_iter, tol_grad: cfg.tol_grad, tol_step: cfg.tol_step };
    let mut best: Option<BfgsOutcome> = None;
    let mut finite = 0usize;
    for z0 in starts {
        let outcome = bfgs(z0, &mut objective, &opts);
        if !outcome.f.is_finite() {
            continue;
        }
        finite += 1;
        let better = match &best {
            None => true,
            Some(b) => outcome.f < b.f || (outcome.f == b.f && outcome.grad_norm < b.grad_norm),
        };
        if better {
            best = Some(outcome);
        }
    }
    let outcome = best.ok_or(EstimateError::AllStartsFailed)?;

    let omega = outcome.x[0].exp();
    let alpha: Vec<f64> = outcome.x[1..].iter().map(|z| z.exp()).collect();
    let theta = FullTheta {
        dar: DarParams::new(phi, omega, alpha).map_err(EstimateError::Dar)?,
        mixture: MixtureFree::standard_normal(),
    };
    let mixture = complete_params(&theta.mixture)?;
    let residuals =
        structural_residuals(y, &theta.dar.phi, theta.dar.omega, &theta.dar.alpha);
    let neg_loglik = objective::neg_quasi_loglik(&theta, series);
    Ok(FitResult {
        k: 1,
        neg_loglik,
        loglik: -neg_loglik,
        converged: outcome.converged,
        n_restarts_used: finite,
        n_used: n - p,
        residuals,
        covariance: None,
        std_errors: None,
        grad_norm: outcome.grad_norm,
        responsibilities_mean: vec![1.0],
        mixture,
        theta,
    })
}

/// Maximum likelihood under a known innovation law: structural parameters only,
/// numeric central-difference gradients.
pub fn fit_mle(
    series: &Series,
    p: usize,
    innovation: &InnovationSpec,
    cfg: &FitConfig,
) -> Result<FitResult, EstimateError> {
    validate(series, p, 1, "mle")?;
    let y = series.values.clone();
    let layout = Layout { p, k: 1 };
    let dim = layout.dim();

    let value = {
        let y = y.clone();
        let innovation = innovation.clone();
        let cfg_box = (cfg.phi_abs_max, cfg.omega_bounds, cfg.alpha_bounds);
        move |z: &[f64]| -> f64 {
            let mut theta = vec![0.0; dim];
            decode(&layout, z, &mut theta);
            if theta[..p].iter().any(|v| v.abs() > cfg_box.0)
                || theta[p] < cfg_box.1 .0
                || theta[p] > cfg_box.1 .1
                || theta[p + 1..].iter().any(|&a| a < cfg_box.2 .0 || a > cfg_box.2 .1)
            {
                return f64::INFINITY;
            }
            let mut neg = 0.0;
            for i in p..y.len() {
                let mut m = 0.0;
                let mut h = theta[p];
                for j in 0..p {
                    let yl = y[i - 1 - j];
                    m += theta[j] * yl;
                    h += theta[p + 1 + j] * yl * yl;
                }
                let z_t = (y[i] - m) / h.sqrt();
                neg += 0.5 * h.ln() - log_pdf(&innovation, z_t);
            }
            if neg.is_finite() {
                neg
            } else {
                f64::INFINITY
            }
        }
    };

    let base = ols_start(&y, p);
    let mut starts = Vec::new();
    for s in 0..cfg.starts.max(1) {
        if let Some(nat) = build_start(s, &y, 1, &base, cfg) {
            starts.push(encode(&layout, &nat));
        }
    }
    let opts = BfgsOptions { max_iter: cfg.max_iter, tol_grad: cfg.tol_grad, tol_step: cfg.tol_step };
    let mut best: Option<Candidate> = None;
    let mut finite = 0usize;
    for z0 in starts {
        let outcome = bfgs(
            z0,
            |z, g| {
                let f = value(z);
                if !f.is_finite() {
                    return f64::INFINITY;
                }
                let mut zp = z.to_vec();
                for i in 0..dim {
                    let h = 1e-6 * z[i].abs().max(1.0);
                    zp[i] = z[i] + h;
                    let fp = value(&zp);
                    zp[i] = z[i] - h;
                    let fm = value(&zp);
                    zp[i] = z[i];
                    g[i] = if fp.is_finite() && fm.is_finite() {
                        (fp - fm) / (2.0 * h)
                    } else {
                        0.0
                    };
                }
                f
            },
            &opts,
        );
        if !outcome.f.is_finite() {
            continue;
        }
        finite += 1;
        let better = match &best {
            None => true,
            Some(b) => {
                outcome.f < b.outcome.f
                    || (outcome.f == b.outcome.f && outcome.grad_norm < b.outcome.grad_norm)
            }
        };
        if better {
            best = Some(Candidate { outcome });
        }
    }
    let cand = best.ok_or(EstimateError::AllStartsFailed)?;
    let mut result = finish(
        series,
        p,
        1,
        &FitConfig { compute_covariance: false, ..cfg.clone() },
        cand,
        finite,
    )?;
    // The K = 1 finish computed the Gaussian quasi-likelihood value; restore the
    // likelihood under the supplied law.
    let packed = pack(&result.theta);
    let neg = {
        let layout = Layout { p, k: 1 };
        let z = encode(&layout, &packed);
        value(&z)
    };
    result.neg_loglik = neg;
    result.loglik = -neg;
    Ok(result)
}
