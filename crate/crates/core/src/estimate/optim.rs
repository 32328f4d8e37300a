//! Dense BFGS with backtracking line search.
//!
//! The objective may return `+inf` anywhere; the Armijo backtracking loop treats
//! that as a failed step and halves, which is how feasibility constraints are
//! enforced without projecting. Curvature pairs that would break positive
//! definiteness of the inverse Hessian are skipped.

pub(crate) struct BfgsOptions {
    pub max_iter: usize,
    /// Stop with success when `||g||_inf < tol_grad * max(1, |f|)`.
    pub tol_grad: f64,
    /// Stop (without claiming success) when `||step||_inf < tol_step * max(1, ||x||_inf)`.
    pub tol_step: f64,
}

pub(crate) struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    /// The gradient criterion held at exit.
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Minimizes `f` starting from `x0`. `f_and_g(x, g)` returns the objective and, when
/// finite, fills `g` with its gradient.
pub(crate) fn bfgs<F>(x0: Vec<f64>, mut f_and_g: F, opts: &BfgsOptions) -> BfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; d];
    let mut f = f_and_g(&x, &mut g);
    if !f.is_finite() {
        return BfgsOutcome { grad_norm: f64::INFINITY, x, f, converged: false };
    }

    // Inverse Hessian approximation, row-major symmetric.
    let mut hinv = vec![vec![0.0f64; d]; d];
    for i in 0..d {
        hinv[i][i] = 1.0;
    }
    let mut dir = vec![0.0f64; d];
    let mut x_new = vec![0.0f64; d];
    let mut g_new = vec![0.0f64; d];
    let mut iterations = 0;
    let mut converged = inf_norm(&g) < opts.tol_grad * f.abs().max(1.0);

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        // dir = -Hinv g; fall back to steepest descent if it is not a descent direction.
        for i in 0..d {
            dir[i] = -(0..d).map(|j| hinv[i][j] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            for i in 0..d {
                for j in 0..d {
                    hinv[i][j] = if i == j { 1.0 } else { 0.0 };
                }
                dir[i] = -g[i];
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
            if slope == 0.0 {
                converged = true;
                break;
            }
        }

        // Backtracking Armijo search; +inf trial points simply halve the step.
        let mut t = 1.0f64;
        let mut f_new = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..d {
                x_new[i] = x[i] + t * dir[i];
            }
            f_new = f_and_g(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + 1e-4 * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }

        let step_norm = t * inf_norm(&dir);
        let mut s = vec![0.0; d];
        let mut yv = vec![0.0; d];
        for i in 0..d {
            s[i] = x_new[i] - x[i];
            yv[i] = g_new[i] - g[i];
        }
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;

        if inf_norm(&g) < opts.tol_grad * f.abs().max(1.0) {
            converged = true;
            break;
        }
        if step_norm < opts.tol_step * inf_norm(&x).max(1.0) {
            break;
        }

        // BFGS inverse update; skip when curvature is too weak to be trusted.
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm = yv.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-10 * s_norm * y_norm {
            let rho = 1.0 / sy;
            // hy = Hinv y, then rank-two update.
            let hy: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| hinv[i][j] * yv[j]).sum())
                .collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..d {
                for j in 0..d {
                    hinv[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * rho * yhy * s[i] * s[j]
                        + rho * s[i] * s[j];
                }
            }
        }
    }

    let grad_norm = inf_norm(&g);
    BfgsOutcome { x, f, grad_norm, converged }
}
