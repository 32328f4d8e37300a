//! Statistical validation of the VaR machinery: the empirical-quantile forecast
//! against the exact normal quantile, and the likelihood-ratio tests against
//! their asymptotic chi-square calibration under the null.

mod common;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use darmix::backtest::{
    lr_cci, lr_pof, rolling_backtest, VarConfig, VarEstimator, CHI2_2_CRITICALS,
};
use darmix::dar::{cond_moments, simulate, DarParams};
use darmix::estimate::FitConfig;
use darmix::innovations::{sample_innovations, InnovationSpec};

const CHI2_1_CRIT_99: f64 = 6.6349;

fn fit_cfg() -> FitConfig {
    FitConfig { starts: 3, compute_covariance: false, ..FitConfig::default() }
}

#[test]
fn forecasts_reproduce_the_normal_quantile_with_a_long_window() {
    // With the true parameters fixed and standard normal innovations, the
    // standardized forecast must sit at the 5% normal quantile -1.6449.
    let truth = DarParams::new(vec![0.3], 1.0, vec![0.5]).unwrap();
    let eta = sample_innovations(&InnovationSpec::standard_normal(), 5_550, 2_024);
    let series = simulate(&truth, &eta, &[0.0], 500).unwrap();
    let cfg = VarConfig {
        p_level: 0.05,
        order: 1,
        estimation_start: 1,
        test_start: 5_001,
        test_end: 5_050,
        refit_every: 1,
        estimator: VarEstimator::Fixed(truth.clone()),
        fit: fit_cfg(),
    };
    let report = rolling_backtest(&series, &cfg).unwrap();
    assert_eq!(report.times.len(), 50);
    for (i, &t) in report.times.iter().enumerate() {
        let (m, h) = cond_moments(&truth, &series, t).unwrap();
        let z = (report.forecasts[i] - m) / h.sqrt();
        assert!(
            (z + 1.6449).abs() < 0.05,
            "step {t}: standardized forecast {z} is far from -1.6449"
        );
    }
    assert_eq!(report.refits, 0, "fixed parameters must never refit");
}

#[test]
fn pof_statistic_is_chi_square_calibrated_under_the_null() {
    let n = 100_000usize;
    let p = 0.05f64;
    let mut below = 0usize;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let hits = (0..n).filter(|_| rng.gen_bool(p)).count();
        if lr_pof(n, hits, p) < CHI2_1_CRIT_99 {
            below += 1;
        }
    }
    assert!(below >= 95, "only {below}/100 below the 99% critical value");
}

#[test]
fn independence_statistic_is_chi_square_calibrated_under_the_null() {
    let n = 100_000usize;
    let p = 0.05f64;
    let mut below = 0usize;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + seed);
        let hits: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
        if lr_cci(&hits) < CHI2_1_CRIT_99 {
            below += 1;
        }
    }
    assert!(below >= 95, "only {below}/100 below the 99% critical value");
}

#[test]
fn estimated_backtest_is_consistent_under_correct_specification() {
    let truth = DarParams::new(vec![0.3], 1.0, vec![0.4]).unwrap();
    let eta = sample_innovations(&InnovationSpec::standard_normal(), 3_000, 11);
    let series = simulate(&truth, &eta, &[0.0], 500).unwrap();
    let cfg = VarConfig {
        p_level: 0.05,
        order: 1,
        estimation_start: 1,
        test_start: 2_001,
        test_end: 2_500,
        refit_every: 100,
        estimator: VarEstimator::GaussianQmle,
        fit: fit_cfg(),
    };
    let report = rolling_backtest(&series, &cfg).unwrap();

    assert_eq!(report.times.len(), 500);
    assert_eq!(report.hits.iter().filter(|&&h| h).count(), report.n_star);
    assert!((report.p_hat - report.n_star as f64 / 500.0).abs() < 1e-12);
    assert!((report.lr_cc - (report.lr_pof + report.lr_cci)).abs() < 1e-10);
    assert!(report.p_hat > 0.01 && report.p_hat < 0.12, "hit rate {}", report.p_hat);
    // A correctly specified model must clear the 1% combined test.
    let (_, crit, reject) = report.reject_at[0];
    assert_eq!(crit, 9.21);
    assert!(!reject, "lr_cc {} rejected at the 1% level", report.lr_cc);
    assert_eq!(report.refits, 5, "500 steps at cadence 100");
    // Critical value table is wired through unchanged.
    assert_eq!(
        report.reject_at.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>(),
        CHI2_2_CRITICALS.to_vec()
    );
}

#[test]
fn misspecified_constant_var_is_rejected() {
    // Forecasting with grossly wrong fixed parameters (tiny volatility) must
    // produce far too many hits and a rejected combined test.
    let truth = DarParams::new(vec![0.3], 1.0, vec![0.5]).unwrap();
    let wrong = DarParams::new(vec![0.0], 0.05, vec![1e-8]).unwrap();
    let eta = sample_innovations(&InnovationSpec::standard_normal(), 2_600, 17);
    let series = simulate(&truth, &eta, &[0.0], 500).unwrap();
    let cfg = VarConfig {
        p_level: 0.05,
        order: 1,
        estimation_start: 1,
        test_start: 1_101,
        test_end: 2_100,
        refit_every: 1,
        estimator: VarEstimator::Fixed(wrong),
        fit: fit_cfg(),
    };
    let report = rolling_backtest(&series, &cfg).unwrap();
    // The residual window under the wrong parameters is far from standard
    // normal, so the empirical quantile is off scale and hits pile up.
    assert!(
        report.p_hat > 0.10 || report.lr_cc > 9.21,
        "misspecification went undetected: p_hat {}, lr_cc {}",
        report.p_hat,
        report.lr_cc
    );
}
