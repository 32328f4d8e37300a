//! Rolling Value-at-Risk forecasting and likelihood-ratio backtests.
//!
//! The one-step VaR forecast at level `p` is
//!
//! ```text
//!   q_t = m_t(theta) + sqrt(h_t(theta)) * r_(ceil(p * n_w))
//! ```
//!
//! where `r_(j)` is the j-th order statistic of the standardized residuals over the
//! estimation window (the printed order statistic exactly, never an interpolated
//! quantile). A hit is `y_t <= q_t`. The hit sequence is scored by the Kupiec
//! proportion-of-failures test, the Christoffersen first-order-Markov independence
//! test, and their sum, which is compared against chi-square(2) critical values.

use thiserror::Error;

use crate::dar::{cond_moments, DarError, DarParams, Series};
use crate::estimate::{
    fit_gaussian_qmle, fit_nmqmle, EstimateError, FitConfig, FitResult,
};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("residual window too short: {have} residuals at level {p_level}")]
    WindowTooShort { have: usize, p_level: f64 },
    #[error("invalid backtest configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Dar(#[from] DarError),
}

/// How the rolling backtest obtains model parameters at each refit.
#[derive(Debug, Clone)]
pub enum VarEstimator {
    /// Normal-mixture QMLE with K components.
    NmQmle { k: usize },
    /// Gaussian QMLE (the K = 1 special case).
    GaussianQmle,
    /// Known parameters, never re-estimated; the residual window still expands.
    /// Used for correct-specification null studies.
    Fixed(DarParams),
}

/// Rolling-backtest configuration over 1-based series indices.
#[derive(Debug, Clone)]
pub struct VarConfig {
    /// VaR tail level, in (0, 1).
    pub p_level: f64,
    /// DAR order of the forecasting model.
    pub order: usize,
    /// First index inside the estimation window.
    pub estimation_start: usize,
    /// First forecast index; the window then expands one observation per step.
    pub test_start: usize,
    /// Last forecast index, inclusive.
    pub test_end: usize,
    /// Refit cadence in steps (1 = refit daily).
    pub refit_every: usize,
    pub estimator: VarEstimator,
    /// Optimizer settings for each refit.
    pub fit: FitConfig,
}

/// Chi-square(2) critical values used for the combined test decision.
pub const CHI2_2_CRITICALS: [(f64, f64); 3] = [(0.01, 9.21), (0.025, 7.38), (0.05, 5.99)];

/// Outcome of a rolling backtest.
#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub p_level: f64,
    /// Forecast indices, one per test step.
    pub times: Vec<usize>,
    pub observed: Vec<f64>,
    pub forecasts: Vec<f64>,
    /// Hit indicators `y_t <= q_t`.
    pub hits: Vec<bool>,
    /// Number of hits.
    pub n_star: usize,
    /// `n_star / N`.
    pub p_hat: f64,
    pub lr_pof: f64,
    pub lr_cci: f64,
    /// `lr_pof + lr_cci`.
    pub lr_cc: f64,
    /// `(test level, critical value, lr_cc exceeds it)` rows.
    pub reject_at: Vec<(f64, f64, bool)>,
    /// Successful refits performed.
    pub refits: usize,
    /// Refits that failed and fell back to the previous parameters.
    pub failed_refits: usize,
}

impl BacktestReport {
    /// CSV rows `t,y,var,hit`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,y,var,hit\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{}\n",
                self.times[i],
                self.observed[i],
                self.forecasts[i],
                u8::from(self.hits[i])
            ));
        }
        out
    }

    /// Keyed summary block, one `key = value` per line.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("p_level = {}\n", self.p_level));
        out.push_str(&format!("n = {}\n", self.hits.len()));
        out.push_str(&format!("n_star = {}\n", self.n_star));
        out.push_str(&format!("p_hat = {:.6}\n", self.p_hat));
        out.push_str(&format!("lr_pof = {:.6}\n", self.lr_pof));
        out.push_str(&format!("lr_cci = {:.6}\n", self.lr_cci));
        out.push_str(&format!("lr_cc = {:.6}\n", self.lr_cc));
        for (level, crit, reject) in &self.reject_at {
            out.push_str(&format!(
                "reject_at_{} = {} (critical {})\n",
                level,
                if *reject { "yes" } else { "no" },
                crit
            ));
        }
        out.push_str(&format!("refits = {}\n", self.refits));
        out.push_str(&format!("failed_refits = {}\n", self.failed_refits));
        out
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Kupiec proportion-of-failures statistic for `n_star` hits in `n` trials at
/// nominal level `p_level`, with the `0 log 0 := 0` convention.
pub fn lr_pof(n: usize, n_star: usize, p_level: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let misses = (n - n_star) as f64;
    let hits = n_star as f64;
    let ll = |q: f64| xlogy(misses, 1.0 - q) + xlogy(hits, q);
    2.0 * (ll(hits / n as f64) - ll(p_level))
}

/// Christoffersen independence statistic: first-order Markov alternative against a
/// pooled violation rate over the `N - 1` consecutive transitions.
pub fn lr_cci(hits: &[bool]) -> f64 {
    if hits.len() < 2 {
        return 0.0;
    }
    let (mut n00, mut n01, mut n10, mut n11) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for w in hits.windows(2) {
        match (w[0], w[1]) {
            (false, false) => n00 += 1.0,
            (false, true) => n01 += 1.0,
            (true, false) => n10 += 1.0,
            (true, true) => n11 += 1.0,
        }
    }
    let transitions = n00 + n01 + n10 + n11;
    let tau = (n01 + n11) / transitions;
    let ll_null = xlogy(n00 + n10, 1.0 - tau) + xlogy(n01 + n11, tau);
    let pi01 = if n00 + n01 > 0.0 { n01 / (n00 + n01) } else { 0.0 };
    let pi11 = if n10 + n11 > 0.0 { n11 / (n10 + n11) } else { 0.0 };
    let ll_alt = xlogy(n00, 1.0 - pi01)
        + xlogy(n01, pi01)
        + xlogy(n10, 1.0 - pi11)
        + xlogy(n11, pi11);
    2.0 * (ll_alt - ll_null)
}

/// Combined conditional-coverage statistic.
pub fn lr_cc(n: usize, hits: &[bool], p_level: f64) -> f64 {
    let n_star = hits.iter().filter(|&&h| h).count();
    lr_pof(n, n_star, p_level) + lr_cci(hits)
}

/// The `ceil(p * n)`-th order statistic of an ascending-sorted slice. A hair of
/// slack keeps exact-integer products (0.05 * 100) from rounding up in floating
/// point.
fn sorted_quantile(sorted: &[f64], p_level: f64) -> Result<f64, BacktestError> {
    let n = sorted.len();
    let x = p_level * n as f64;
    let idx = (x - 1e-9 * x.max(1.0)).ceil() as usize;
    if n == 0 || idx < 1 {
        return Err(BacktestError::WindowTooShort { have: n, p_level });
    }
    Ok(sorted[idx.min(n) - 1])
}

fn sorted_insert(buf: &mut Vec<f64>, x: f64) {
    let idx = buf.partition_point(|&v| v < x);
    buf.insert(idx, x);
}

/// Standardized residuals `(y_s - m_s)/sqrt(h_s)` for `s in from..=to` on the full
/// series, ascending-sorted.
fn window_residuals(
    params: &DarParams,
    series: &Series,
    from: usize,
    to: usize,
) -> Result<Vec<f64>, BacktestError> {
    let mut out = Vec::with_capacity(to + 1 - from);
    for s in from..=to {
        out.push(standardized_residual(params, series, s)?);
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    Ok(out)
}

fn standardized_residual(
    params: &DarParams,
    series: &Series,
    s: usize,
) -> Result<f64, BacktestError> {
    let (m, h) = cond_moments(params, series, s)?;
    Ok((series.values[s - 1] - m) / h.sqrt())
}

/// One-step VaR forecast for index `t` from a fitted model: conditional moments at
/// `t` plus the in-sample residual quantile of the fit.
pub fn var_forecast(
    fit: &FitResult,
    series: &Series,
    t: usize,
    p_level: f64,
) -> Result<f64, BacktestError> {
    if !(p_level > 0.0 && p_level < 1.0) {
        return Err(BacktestError::InvalidConfig(format!(
            "p_level must lie in (0,1), got {p_level}"
        )));
    }
    let (m, h) = cond_moments(&fit.theta.dar, series, t)?;
    let mut sorted = fit.residuals.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    Ok(m + h.sqrt() * sorted_quantile(&sorted, p_level)?)
}

fn validate(series: &Series, cfg: &VarConfig) -> Result<usize, BacktestError> {
    let n = series.len();
    let err = |msg: String| Err(BacktestError::InvalidConfig(msg));
    if !(cfg.p_level > 0.0 && cfg.p_level < 1.0) {
        return err(format!("p_level must lie in (0,1), got {}", cfg.p_level));
    }
    if cfg.refit_every < 1 {
        return err("refit_every must be at least 1".into());
    }
    let p = match &cfg.estimator {
        VarEstimator::Fixed(params) => params.order(),
        _ => cfg.order,
    };
    if p == 0 {
        return err("model order must be positive".into());
    }
    if cfg.estimation_start < 1
        || cfg.estimation_start >= cfg.test_start
        || cfg.test_start > cfg.test_end
        || cfg.test_end > n
    {
        return err(format!(
            "need 1 <= estimation_start < test_start <= test_end <= {n}, got {} / {} / {}",
            cfg.estimation_start, cfg.test_start, cfg.test_end
        ));
    }
    Ok(p)
}

/// Expanding-window VaR backtest: refit every `refit_every` steps, forecast each
/// test index, and score the hit sequence. A failed refit reuses the previous
/// parameters and is counted in `failed_refits`; the residual window still gains
/// one observation per step.
pub fn rolling_backtest(series: &Series, cfg: &VarConfig) -> Result<BacktestReport, BacktestError> {
    let p = validate(series, cfg)?;
    // Earliest index whose conditional moments are computable from available lags.
    let r0 = cfg.estimation_start.max((p + 1).saturating_sub(series.presample.len()));
    if r0 > cfg.test_start - 1 {
        return Err(BacktestError::WindowTooShort { have: 0, p_level: cfg.p_level });
    }
    let fit_cfg = FitConfig { compute_covariance: false, ..cfg.fit.clone() };
    let refit = |t: usize| -> Result<DarParams, BacktestError> {
        let window = Series::new(
            series.values[cfg.estimation_start - 1..t - 1].to_vec(),
            Vec::new(),
        );
        let fit = match &cfg.estimator {
            VarEstimator::NmQmle { k } => fit_nmqmle(&window, p, *k, &fit_cfg)?,
            VarEstimator::GaussianQmle => fit_gaussian_qmle(&window, p, &fit_cfg)?,
            VarEstimator::Fixed(_) => unreachable!("fixed parameters are never refit"),
        };
        Ok(fit.theta.dar)
    };

    let steps = cfg.test_end + 1 - cfg.test_start;
    let mut times = Vec::with_capacity(steps);
    let mut observed = Vec::with_capacity(steps);
    let mut forecasts = Vec::with_capacity(steps);
    let mut hits = Vec::with_capacity(steps);
    let mut refits = 0usize;
    let mut failed_refits = 0usize;
    let mut params: Option<DarParams> = None;
    let mut window: Vec<f64> = Vec::new();

    for t in cfg.test_start..=cfg.test_end {
        let step = t - cfg.test_start;
        let fixed = matches!(cfg.estimator, VarEstimator::Fixed(_));
        let wants_refit = !fixed && step % cfg.refit_every == 0;
        if step == 0 {
            let theta = match &cfg.estimator {
                VarEstimator::Fixed(p0) => p0.clone(),
                _ => refit(t)?,
            };
            if !fixed {
                refits += 1;
            }
            window = window_residuals(&theta, series, r0, t - 1)?;
            params = Some(theta);
        } else if wants_refit {
            match refit(t) {
                Ok(theta) => {
                    window = window_residuals(&theta, series, r0, t - 1)?;
                    params = Some(theta);
                    refits += 1;
                }
                Err(_) => {
                    failed_refits += 1;
                    let theta = params.as_ref().expect("previous fit exists");
                    sorted_insert(&mut window, standardized_residual(theta, series, t - 1)?);
                }
            }
        } else {
            let theta = params.as_ref().expect("previous fit exists");
            sorted_insert(&mut window, standardized_residual(theta, series, t - 1)?);
        }

        let theta = params.as_ref().expect("parameters set above");
        let (m, h) = cond_moments(theta, series, t)?;
        let q = m + h.sqrt() * sorted_quantile(&window, cfg.p_level)?;
        let y = series.values[t - 1];
        times.push(t);
        observed.push(y);
        forecasts.push(q);
        hits.push(y <= q);
    }

    let n = hits.len();
    let n_star = hits.iter().filter(|&&h| h).count();
    let pof = lr_pof(n, n_star, cfg.p_level);
    let cci = lr_cci(&hits);
    let cc = pof + cci;
    let reject_at = CHI2_2_CRITICALS
        .iter()
        .map(|&(level, crit)| (level, crit, cc > crit))
        .collect();
    Ok(BacktestReport {
        p_level: cfg.p_level,
        times,
        observed,
        forecasts,
        hits,
        n_star,
        p_hat: n_star as f64 / n as f64,
        lr_pof: pof,
        lr_cci: cci,
        lr_cc: cc,
        reject_at,
        refits,
        failed_refits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dar::simulate;
    use crate::estimate::FullTheta;
    use crate::innovations::{sample_innovations, InnovationSpec};
    use crate::mixture::{complete_params, MixtureFree};

    fn dar1(phi: f64, omega: f64, alpha: f64) -> DarParams {
        DarParams::new(vec![phi], omega, vec![alpha]).unwrap()
    }

    fn sim(params: &DarParams, n: usize, seed: u64) -> Series {
        let eta = sample_innovations(&InnovationSpec::standard_normal(), n + 600, seed);
        simulate(params, &eta, &[0.0], 500).unwrap()
    }

    #[test]
    fn pof_is_zero_when_rates_match() {
        assert_eq!(lr_pof(1000, 50, 0.05), 0.0);
    }

    #[test]
    fn pof_hand_values() {
        // 2 * (20 log 2 + 980 log(0.98/0.99))
        assert!((lr_pof(1000, 20, 0.01) - 7.827).abs() < 1e-3, "{}", lr_pof(1000, 20, 0.01));
        // Degenerate zero-hit case: 2 * 100 * (-log 0.99).
        assert!((lr_pof(100, 0, 0.01) - 2.0101).abs() < 1e-3);
        assert!((lr_pof(100, 100, 0.99) - lr_pof(100, 0, 0.01)).abs() < 1e-12);
    }

    #[test]
    fn pof_scales_additively_and_stays_nonnegative() {
        for &(n, s, p) in
            &[(100usize, 3usize, 0.05), (250, 7, 0.01), (400, 60, 0.1), (50, 0, 0.02)]
        {
            let one = lr_pof(n, s, p);
            assert!(one >= -1e-12);
            assert!((lr_pof(2 * n, 2 * s, p) - 2.0 * one).abs() < 1e-8);
        }
    }

    #[test]
    fn cci_hand_value() {
        let hits: Vec<bool> =
            [0, 1, 0, 0, 1, 0, 0, 0, 1, 0].iter().map(|&h| h == 1).collect();
        // n00=3, n01=3, n10=3, n11=0 over 9 transitions; pooled rate 1/3.
        assert!((lr_cci(&hits) - 3.140).abs() < 1e-3, "{}", lr_cci(&hits));
    }

    #[test]
    fn cci_degenerate_sequences_are_zero() {
        assert_eq!(lr_cci(&[false; 50]), 0.0);
        assert_eq!(lr_cci(&[true; 50]), 0.0);
        assert_eq!(lr_cci(&[true]), 0.0);
    }

    #[test]
    fn quantile_is_the_printed_order_statistic() {
        let sorted: Vec<f64> = (1..=100).map(f64::from).collect();
        // ceil(0.05 * 100) = 5 -> fifth smallest.
        assert_eq!(sorted_quantile(&sorted, 0.05).unwrap(), 5.0);
        assert_eq!(sorted_quantile(&sorted, 0.051).unwrap(), 6.0);
        assert_eq!(sorted_quantile(&sorted, 0.001).unwrap(), 1.0);
        assert!(sorted_quantile(&[], 0.05).is_err());
    }

    #[test]
    fn sorted_insert_matches_full_rebuild() {
        let params = dar1(0.3, 1.0, 0.5);
        let series = sim(&params, 400, 11);
        let full = window_residuals(&params, &series, 2, 400).unwrap();
        let mut incremental = window_residuals(&params, &series, 2, 300).unwrap();
        for s in 301..=400 {
            sorted_insert(&mut incremental, standardized_residual(&params, &series, s).unwrap());
        }
        assert_eq!(full, incremental);
    }

    #[test]
    fn var_forecast_constant_volatility_limit() {
        // phi = 0, alpha ~ 0: the forecast is the residual quantile itself.
        let params = dar1(0.0, 1.0, 1e-8);
        let series = Series::new(vec![0.5, -0.3, 0.8, -0.1], vec![]);
        let fit = FitResult {
            theta: FullTheta { dar: params, mixture: MixtureFree::standard_normal() },
            mixture: complete_params(&MixtureFree::standard_normal()).unwrap(),
            k: 1,
            neg_loglik: 0.0,
            loglik: 0.0,
            converged: true,
            n_restarts_used: 1,
            n_used: 5,
            residuals: vec![1.5, -2.0, 0.3, -0.7, 0.9],
            covariance: None,
            std_errors: None,
            grad_norm: 0.0,
            responsibilities_mean: vec![1.0],
        };
        // ceil(0.2 * 5) = 1 -> smallest residual.
        let q2 = var_forecast(&fit, &series, 2, 0.2).unwrap();
        let q4 = var_forecast(&fit, &series, 4, 0.2).unwrap();
        assert!((q2 + 2.0).abs() < 1e-6, "{q2}");
        assert!((q2 - q4).abs() < 1e-6);
        // ceil(0.5 * 5) = 3 -> median residual.
        let med = var_forecast(&fit, &series, 2, 0.5).unwrap();
        assert!((med - 0.3).abs() < 1e-6);
    }

    #[test]
    fn rolling_backtest_is_consistent_and_deterministic() {
        let params = dar1(0.3, 1.0, 0.5);
        let series = sim(&params, 600, 42);
        let cfg = VarConfig {
            p_level: 0.05,
            order: 1,
            estimation_start: 1,
            test_start: 301,
            test_end: 600,
            refit_every: 1,
            estimator: VarEstimator::Fixed(params.clone()),
            fit: FitConfig::default(),
        };
        let report = rolling_backtest(&series, &cfg).unwrap();
        assert_eq!(report.hits.len(), 300);
        assert_eq!(report.n_star, report.hits.iter().filter(|&&h| h).count());
        assert!((report.p_hat - report.n_star as f64 / 300.0).abs() < 1e-15);
        assert!((report.lr_cc - (report.lr_pof + report.lr_cci)).abs() < 1e-12);
        assert_eq!(report.refits, 0);
        // Correctly specified model: the hit rate should be in the right ballpark.
        assert!(report.p_hat > 0.005 && report.p_hat < 0.15, "{}", report.p_hat);
        let again = rolling_backtest(&series, &cfg).unwrap();
        assert_eq!(report.forecasts, again.forecasts);
        assert_eq!(report.hits, again.hits);

        let csv = report.to_csv();
        assert!(csv.starts_with("t,y,var,hit\n"));
        assert_eq!(csv.lines().count(), 301);
        assert!(report.summary().contains("lr_cc = "));
    }

    #[test]
    fn deeper_levels_never_lose_hits() {
        let params = dar1(0.3, 1.0, 0.5);
        let series = sim(&params, 500, 7);
        let base = VarConfig {
            p_level: 0.05,
            order: 1,
            estimation_start: 1,
            test_start: 251,
            test_end: 500,
            refit_every: 1,
            estimator: VarEstimator::Fixed(params.clone()),
            fit: FitConfig::default(),
        };
        let low = rolling_backtest(&series, &base).unwrap();
        let high =
            rolling_backtest(&series, &VarConfig { p_level: 0.25, ..base.clone() }).unwrap();
        assert!(high.n_star >= low.n_star);
    }

    #[test]
    fn estimated_rolling_backtest_counts_refits() {
        let params = dar1(0.3, 1.0, 0.5);
        let series = sim(&params, 260, 3);
        let cfg = VarConfig {
            p_level: 0.1,
            order: 1,
            estimation_start: 1,
            test_start: 201,
            test_end: 260,
            refit_every: 25,
            estimator: VarEstimator::GaussianQmle,
            fit: FitConfig { starts: 2, ..FitConfig::default() },
        };
        let report = rolling_backtest(&series, &cfg).unwrap();
        // Steps 0, 25, 50 trigger refits over the 60 test points.
        assert_eq!(report.refits, 3);
        assert_eq!(report.failed_refits, 0);
        assert_eq!(report.hits.len(), 60);
        assert!((report.lr_cc - (report.lr_pof + report.lr_cci)).abs() < 1e-12);
    }

    #[test]
    fn config_validation_rejects_bad_windows() {
        let params = dar1(0.3, 1.0, 0.5);
        let series = sim(&params, 100, 1);
        let cfg = VarConfig {
            p_level: 0.05,
            order: 1,
            estimation_start: 50,
            test_start: 40,
            test_end: 90,
            refit_every: 1,
            estimator: VarEstimator::Fixed(params.clone()),
            fit: FitConfig::default(),
        };
        assert!(rolling_backtest(&series, &cfg).is_err());
        let cfg2 = VarConfig { p_level: 1.5, estimation_start: 1, test_start: 40, ..cfg };
        assert!(rolling_backtest(&series, &cfg2).is_err());
    }
}
