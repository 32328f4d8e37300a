//! Shared numerical oracles for the integration suites: adaptive quadrature that
//! is reliable for polynomially-decaying tails, a quadrature CDF with an exact
//! Kolmogorov-Smirnov statistic, and random feasible mixture generation.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use darmix::mixture::{complete_params, MixtureFree, MixtureParams};

fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let refined = left + right;
    if depth == 0 || (refined - whole).abs() <= 15.0 * tol {
        refined + (refined - whole) / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// `E[x^k]` under the density `exp(log_pdf)`, integrated over the whole line via
/// the substitution `x = sinh(t)`, which turns polynomial tail decay into
/// exponential decay in `t` (covers Student-type tails down to df > 2 + k - 1).
/// The range is pre-split into narrow panels so the adaptive refinement cannot
/// miss a bump that sits between its first probe points.
pub fn density_moment(log_pdf: &dyn Fn(f64) -> f64, k: i32) -> f64 {
    let g = move |t: f64| {
        let x = t.sinh();
        let w = log_pdf(x) + t.cosh().ln();
        if w < -700.0 {
            0.0
        } else {
            w.exp() * x.powi(k)
        }
    };
    let panels = 60usize;
    let width = 120.0 / panels as f64;
    (0..panels)
        .map(|i| {
            let a = -60.0 + width * i as f64;
            adaptive_simpson(&g, a, a + width, 1e-11)
        })
        .sum()
}

/// Quadrature CDF of `exp(log_pdf)` on a sinh-spaced grid: returns `(xs, cdf)`
/// with `xs` strictly increasing and `cdf` normalized to end at 1.
pub fn grid_cdf(log_pdf: &dyn Fn(f64) -> f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = if points % 2 == 0 { points + 1 } else { points };
    let t_max = 40.0;
    let h = 2.0 * t_max / (n - 1) as f64;
    let mut xs = Vec::with_capacity(n);
    let mut dens = Vec::with_capacity(n);
    for i in 0..n {
        let t = -t_max + h * i as f64;
        let x = t.sinh();
        let w = log_pdf(x) + t.cosh().ln();
        xs.push(x);
        dens.push(if w < -700.0 { 0.0 } else { w.exp() });
    }
    // Composite Simpson prefix sums over pairs of panels.
    let mut cdf = vec![0.0; n];
    for i in (2..n).step_by(2) {
        cdf[i] = cdf[i - 2] + h / 3.0 * (dens[i - 2] + 4.0 * dens[i - 1] + dens[i]);
        // Odd interior node: trapezoid correction inside the pair keeps monotonicity.
        cdf[i - 1] = cdf[i - 2] + 0.5 * (cdf[i] - cdf[i - 2]);
    }
    let total = cdf[n - 1];
    assert!(
        (total - 1.0).abs() < 1e-5,
        "density mass {total} is not 1; log_pdf or grid is wrong"
    );
    for v in cdf.iter_mut() {
        *v /= total;
    }
    (xs, cdf)
}

fn interp_cdf(xs: &[f64], cdf: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return 0.0;
    }
    if x >= xs[xs.len() - 1] {
        return 1.0;
    }
    let hi = xs.partition_point(|&v| v < x);
    let lo = hi - 1;
    let span = xs[hi] - xs[lo];
    let w = if span > 0.0 { (x - xs[lo]) / span } else { 0.0 };
    cdf[lo] + w * (cdf[hi] - cdf[lo])
}

/// Exact two-sided Kolmogorov-Smirnov distance between a sample and a grid CDF.
pub fn ks_distance(samples: &mut [f64], xs: &[f64], cdf: &[f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &s) in samples.iter().enumerate() {
        let f = interp_cdf(xs, cdf, s);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Rejection-samples a random feasible constrained mixture with K components.
pub fn random_feasible_mixture(rng: &mut ChaCha8Rng, k: usize) -> MixtureParams {
    loop {
        let weights: Vec<f64> = (0..k - 1).map(|_| rng.gen_range(0.02..0.9)).collect();
        let means: Vec<f64> = (0..k - 1).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let scales: Vec<f64> = (0..k - 1).map(|_| rng.gen_range(0.05..1.2)).collect();
        let Ok(free) = MixtureFree::new(weights, means, scales) else { continue };
        match complete_params(&free) {
            Ok(p) => return p,
            Err(_) => continue,
        }
    }
}

/// Median of a sample (by value, sample left unsorted).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
