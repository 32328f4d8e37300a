//! End-to-end estimation checks on simulated data: parameter recovery, the
//! analytic score against finite differences away from the optimum, the
//! Gaussian special case, and standard-error scaling with sample size.

mod common;

use darmix::dar::{simulate, DarParams, Series};
use darmix::estimate::{
    fit_gaussian_qmle, fit_mle, fit_nmqmle, neg_quasi_loglik, score, FitConfig, FullTheta,
};
use darmix::innovations::{sample_innovations, InnovationSpec};
use darmix::mixture::MixtureFree;

fn sim(params: &DarParams, law: &str, n: usize, seed: u64) -> Series {
    let spec = InnovationSpec::parse(law).expect("law parses");
    let eta = sample_innovations(&spec, n + 500, seed);
    let presample = vec![0.0; params.order()];
    simulate(params, &eta, &presample, 500).expect("stable simulation")
}

fn cfg(starts: usize, seed: u64, covariance: bool) -> FitConfig {
    FitConfig { starts, seed, compute_covariance: covariance, ..FitConfig::default() }
}

#[test]
fn two_component_fit_recovers_heavy_tailed_dynamics() {
    let truth = DarParams::new(vec![0.3], 1.0, vec![0.5]).unwrap();
    let series = sim(&truth, "t:5", 4_000, 42);
    let fit = fit_nmqmle(&series, 1, 2, &cfg(6, 0, false)).unwrap();
    assert!(fit.converged, "fit did not converge: grad {}", fit.grad_norm);
    assert!((fit.theta.dar.phi[0] - 0.3).abs() < 0.05, "phi {}", fit.theta.dar.phi[0]);
    assert!((fit.theta.dar.omega - 1.0).abs() < 0.3, "omega {}", fit.theta.dar.omega);
    assert!((fit.theta.dar.alpha[0] - 0.5).abs() < 0.15, "alpha {}", fit.theta.dar.alpha[0]);
    // The fitted mixture must stay standardized.
    assert!(fit.mixture.constraint_residual() < 1e-9);
}

#[test]
fn second_order_model_recovers_both_lags() {
    let truth = DarParams::new(vec![0.3, 0.1], 1.0, vec![0.4, 0.2]).unwrap();
    let series = sim(&truth, "skewnormal:5", 6_000, 7);
    let fit = fit_nmqmle(&series, 2, 2, &cfg(6, 1, false)).unwrap();
    assert!(fit.converged);
    for (j, (&est, &tru)) in
        fit.theta.dar.phi.iter().zip(&truth.phi).enumerate()
    {
        assert!((est - tru).abs() < 0.06, "phi{} {est} vs {tru}", j + 1);
    }
    for (j, (&est, &tru)) in fit.theta.dar.alpha.iter().zip(&truth.alpha).enumerate() {
        assert!((est - tru).abs() < 0.12, "alpha{} {est} vs {tru}", j + 1);
    }
}

#[test]
fn analytic_score_matches_finite_differences_at_rough_points() {
    // Evaluate away from any optimum so every term of the chain rule is live.
    let truth = DarParams::new(vec![0.25, -0.1], 0.9, vec![0.3, 0.15]).unwrap();
    let series = sim(&truth, "t:8", 300, 9);
    let free = MixtureFree::new(vec![0.35], vec![-0.45], vec![0.7]).unwrap();
    let theta = FullTheta {
        dar: DarParams::new(vec![0.2, -0.05], 1.1, vec![0.25, 0.2]).unwrap(),
        mixture: free,
    };
    let g = score(&theta, &series).unwrap();

    // Finite differences on the packed coordinates via public constructors.
    let pack = |t: &FullTheta| -> Vec<f64> {
        let mut v = t.dar.phi.clone();
        v.push(t.dar.omega);
        v.extend_from_slice(&t.dar.alpha);
        let f = &t.mixture;
        v.extend_from_slice(&f.weights);
        v.extend_from_slice(&f.means);
        v.extend_from_slice(&f.scales);
        v
    };
    let unpack = |v: &[f64]| -> FullTheta {
        let p = 2;
        let dar = DarParams::new(v[0..p].to_vec(), v[p], v[p + 1..2 * p + 1].to_vec()).unwrap();
        let base = 2 * p + 1;
        let mixture = MixtureFree::new(
            v[base..base + 1].to_vec(),
            v[base + 1..base + 2].to_vec(),
            v[base + 2..base + 3].to_vec(),
        )
        .unwrap();
        FullTheta { dar, mixture }
    };
    let x = pack(&theta);
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        // score differentiates the log-likelihood sum, the objective is its negative
        let fd = -(neg_quasi_loglik(&unpack(&xp), &series)
            - neg_quasi_loglik(&unpack(&xm), &series))
            / (2.0 * h);
        let rel = (g[i] - fd).abs() / fd.abs().max(1.0);
        assert!(rel < 1e-4, "coordinate {i}: analytic {} vs fd {fd}", g[i]);
    }
}

#[test]
fn one_component_fit_is_the_gaussian_estimator() {
    let truth = DarParams::new(vec![0.3], 1.0, vec![0.5]).unwrap();
    let series = sim(&truth, "t:6", 1_500, 12);
    let a = fit_nmqmle(&series, 1, 1, &cfg(4, 3, false)).unwrap();
    let b = fit_gaussian_qmle(&series, 1, &cfg(4, 3, false)).unwrap();
    assert!((a.theta.dar.phi[0] - b.theta.dar.phi[0]).abs() < 1e-6);
    assert!((a.theta.dar.omega - b.theta.dar.omega).abs() < 1e-6);
    assert!((a.theta.dar.alpha[0] - b.theta.dar.alpha[0]).abs() < 1e-6);
    assert!((a.neg_loglik - b.neg_loglik).abs() < 1e-8 * a.neg_loglik.abs());
}

#[test]
fn standard_errors_shrink_like_root_n() {
    let truth = DarParams::new(vec![0.3], 1.0, vec![0.5]).unwrap();
    let small = sim(&truth, "t:10", 800, 31);
    let big = sim(&truth, "t:10", 7_200, 31);
    let fs = fit_nmqmle(&small, 1, 2, &cfg(4, 0, true)).unwrap();
    let fb = fit_nmqmle(&big, 1, 2, &cfg(4, 0, true)).unwrap();
    let ses = fs.std_errors.as_ref().expect("covariance requested")[0];
    let seb = fb.std_errors.as_ref().expect("covariance requested")[0];
    let ratio = ses / seb;
    // 9x the data should shrink se(phi) by about 3.
    assert!(
        (2.0..4.5).contains(&ratio),
        "se ratio {ratio} (small {ses}, big {seb}) is far from 3"
    );
}

#[test]
fn parametric_mle_handles_student_innovations() {
    let truth = DarParams::new(vec![0.3], 1.0, vec![0.5]).unwrap();
    let series = sim(&truth, "t:2.5", 2_000, 63);
    let spec = InnovationSpec::parse("t:2.5").unwrap();
    let fit = fit_mle(&series, 1, &spec, &cfg(4, 0, false)).unwrap();
    assert!(fit.converged);
    assert!((fit.theta.dar.phi[0] - 0.3).abs() < 0.08, "phi {}", fit.theta.dar.phi[0]);
}

#[test]
fn fits_report_standardized_residuals_of_the_right_length() {
    let truth = DarParams::new(vec![0.2, 0.1], 1.0, vec![0.3, 0.1]).unwrap();
    let series = sim(&truth, "normal", 1_000, 2);
    let fit = fit_gaussian_qmle(&series, 2, &cfg(3, 0, false)).unwrap();
    assert_eq!(fit.residuals.len(), series.len() - 2);
    assert_eq!(fit.n_used, series.len() - 2);
    let m: f64 = fit.residuals.iter().sum::<f64>() / fit.residuals.len() as f64;
    let v: f64 =
        fit.residuals.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / fit.residuals.len() as f64;
    assert!(m.abs() < 0.1, "residual mean {m}");
    assert!((v - 1.0).abs() < 0.15, "residual variance {v}");
}
