//! The Monte Carlo driver: replicate simulation, estimation, and aggregation.

use rayon::prelude::*;

use crate::dar::simulate;
use crate::estimate::{
    fit_gaussian_qmle, fit_mle, fit_nmqmle, fit_two_stage_qmle, FitConfig, FitResult,
};
use crate::innovations::sample_innovations;
use crate::select::{select_k, slope_heuristic};

use super::config::{KPolicy, McEstimator, Scenario};
use super::HarnessError;

/// Aggregated Monte Carlo results. Indexing is `[estimator][parameter]` for the
/// accuracy tables and `[estimator][replicate]` for the per-replicate diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub parameter_names: Vec<String>,
    pub estimator_labels: Vec<String>,
    pub rmse: Vec<Vec<f64>>,
    pub mean_bias: Vec<Vec<f64>>,
    pub replicates: usize,
    /// Replicates that produced an estimate, per estimator.
    pub used: Vec<usize>,
    /// Replicates that failed (simulation or fit), per estimator; these are
    /// excluded from the accuracy aggregates.
    pub failures: Vec<usize>,
    pub failed: Vec<Vec<bool>>,
    pub converged: Vec<Vec<bool>>,
    /// Mixture order used by each replicate fit, when the estimator has one.
    pub chosen_k: Vec<Vec<Option<usize>>>,
}

impl McReport {
    /// Largest per-estimator failure fraction; callers enforce their own gate
    /// (the CLI rejects scenarios above 5%).
    pub fn max_failure_rate(&self) -> f64 {
        self.failures
            .iter()
            .map(|&f| f as f64 / self.replicates as f64)
            .fold(0.0, f64::max)
    }

    /// Long-format CSV `parameter,estimator,rmse,mean_bias`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,estimator,rmse,mean_bias\n");
        for (j, name) in self.parameter_names.iter().enumerate() {
            for (e, label) in self.estimator_labels.iter().enumerate() {
                out.push_str(&format!(
                    "{name},{label},{:.16e},{:.16e}\n",
                    self.rmse[e][j], self.mean_bias[e][j]
                ));
            }
        }
        out
    }

    /// Markdown summary table: one row per parameter, `rmse (bias)` per estimator.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Replicates: {} | used per estimator: {}\n\n",
            self.replicates,
            self.estimator_labels
                .iter()
                .zip(&self.used)
                .map(|(l, u)| format!("{l} {u}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        out.push_str("| parameter |");
        for label in &self.estimator_labels {
            out.push_str(&format!(" {label} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(self.estimator_labels.len()));
        out.push('\n');
        for (j, name) in self.parameter_names.iter().enumerate() {
            out.push_str(&format!("| {name} |"));
            for e in 0..self.estimator_labels.len() {
                out.push_str(&format!(
                    " {:.4} ({:+.4}) |",
                    self.rmse[e][j], self.mean_bias[e][j]
                ));
            }
            out.push('\n');
        }
        if self.failures.iter().any(|&f| f > 0) {
            out.push_str(&format!(
                "\nFailed replicates: {}\n",
                self.estimator_labels
                    .iter()
                    .zip(&self.failures)
                    .map(|(l, f)| format!("{l} {f}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        out
    }
}

/// One estimator's outcome on one replicate.
type EstOutcome = Option<(Vec<f64>, bool, Option<usize>)>;

fn estimator_label(est: McEstimator, policy: &KPolicy) -> String {
    match est {
        McEstimator::Mle => "mle".into(),
        McEstimator::GaussianQmle => "gaussian_qmle".into(),
        McEstimator::TwoStageQmle => "two_stage_qmle".into(),
        McEstimator::Oracle => "oracle".into(),
        McEstimator::NmQmle => match policy {
            KPolicy::Fixed(k) => format!("nmqmle(k={k})"),
            KPolicy::Select { rule, k_min, k_max } => {
                format!("nmqmle({} {k_min}..{k_max})", rule.name())
            }
        },
    }
}

fn structural(fit: &FitResult) -> Vec<f64> {
    let dar = &fit.theta.dar;
    let mut v = dar.phi.clone();
    v.push(dar.omega);
    v.extend_from_slice(&dar.alpha);
    v
}

fn replicate(scenario: &Scenario, r: usize) -> Vec<EstOutcome> {
    let seed = scenario.base_seed.wrapping_add(r as u64);
    let p = scenario.dar_params.order();
    let truth: Vec<f64> = {
        let d = &scenario.dar_params;
        let mut v = d.phi.clone();
        v.push(d.omega);
        v.extend_from_slice(&d.alpha);
        v
    };
    let eta = sample_innovations(&scenario.innovation, scenario.n + scenario.burn_in, seed);
    let series = match simulate(&scenario.dar_params, &eta, &vec![0.0; p], scenario.burn_in) {
        Ok(s) => s,
        Err(_) => return vec![None; scenario.estimators.len()],
    };
    let cfg = FitConfig {
        starts: scenario.starts,
        seed,
        compute_covariance: false,
        ..FitConfig::default()
    };

    scenario
        .estimators
        .iter()
        .map(|est| -> EstOutcome {
            let (fit, k_used) = match est {
                McEstimator::Oracle => {
                    return Some((vec![0.0; truth.len()], true, None));
                }
                McEstimator::Mle => (fit_mle(&series, p, &scenario.innovation, &cfg).ok()?, None),
                McEstimator::GaussianQmle => (fit_gaussian_qmle(&series, p, &cfg).ok()?, Some(1)),
                McEstimator::TwoStageQmle => {
                    (fit_two_stage_qmle(&series, p, &cfg).ok()?, Some(1))
                }
                McEstimator::NmQmle => match &scenario.k_policy {
                    KPolicy::Fixed(k) => (fit_nmqmle(&series, p, *k, &cfg).ok()?, Some(*k)),
                    KPolicy::Select { rule, k_min, k_max } => {
                        let table = select_k(&series, p, *k_min, *k_max, &cfg).ok()?;
                        let k = match (rule.criterion(), rule.slope_method()) {
                            (Some(c), _) => table.chosen(c)?,
                            (_, Some(m)) => slope_heuristic(&table, m).ok()?,
                            _ => unreachable!("every rule maps to a method"),
                        };
                        (fit_nmqmle(&series, p, k, &cfg).ok()?, Some(k))
                    }
                },
            };
            let errors =
                structural(&fit).iter().zip(&truth).map(|(a, b)| a - b).collect();
            Some((errors, fit.converged, k_used))
        })
        .collect()
}

fn aggregate(scenario: &Scenario, outcomes: Vec<Vec<EstOutcome>>) -> McReport {
    let p = scenario.dar_params.order();
    let mut parameter_names: Vec<String> = (1..=p).map(|j| format!("phi{j}")).collect();
    parameter_names.push("omega".into());
    parameter_names.extend((1..=p).map(|j| format!("alpha{j}")));
    let n_par = parameter_names.len();
    let n_est = scenario.estimators.len();
    let reps = scenario.replicates;

    let mut sq = vec![vec![0.0f64; n_par]; n_est];
    let mut sum = vec![vec![0.0f64; n_par]; n_est];
    let mut used = vec![0usize; n_est];
    let mut failed = vec![vec![false; reps]; n_est];
    let mut converged = vec![vec![false; reps]; n_est];
    let mut chosen_k = vec![vec![None; reps]; n_est];

    for (r, rep) in outcomes.iter().enumerate() {
        for (e, outcome) in rep.iter().enumerate() {
            match outcome {
                Some((errors, conv, k)) => {
                    used[e] += 1;
                    converged[e][r] = *conv;
                    chosen_k[e][r] = *k;
                    for (j, err) in errors.iter().enumerate() {
                        sq[e][j] += err * err;
                        sum[e][j] += err;
                    }
                }
                None => failed[e][r] = true,
            }
        }
    }

    let rmse = (0..n_est)
        .map(|e| {
            (0..n_par)
                .map(|j| if used[e] > 0 { (sq[e][j] / used[e] as f64).sqrt() } else { f64::NAN })
                .collect()
        })
        .collect();
    let mean_bias = (0..n_est)
        .map(|e| {
            (0..n_par)
                .map(|j| if used[e] > 0 { sum[e][j] / used[e] as f64 } else { f64::NAN })
                .collect()
        })
        .collect();
    McReport {
        parameter_names,
        estimator_labels: scenario
            .estimators
            .iter()
            .map(|&est| estimator_label(est, &scenario.k_policy))
            .collect(),
        rmse,
        mean_bias,
        replicates: reps,
        used,
        failures: failed.iter().map(|f| f.iter().filter(|&&x| x).count()).collect(),
        failed,
        converged,
        chosen_k,
    }
}

/// Runs the scenario with replicates spread over the thread pool. Replicate `r`
/// seeds every stream from `base_seed + r`, so the result is identical to
/// [`run_monte_carlo_serial`] regardless of thread count.
pub fn run_monte_carlo(scenario: &Scenario) -> Result<McReport, HarnessError> {
    scenario.validate()?;
    let outcomes: Vec<Vec<EstOutcome>> =
        (0..scenario.replicates).into_par_iter().map(|r| replicate(scenario, r)).collect();
    Ok(aggregate(scenario, outcomes))
}

/// Single-threaded reference driver; exists to pin the determinism contract.
pub fn run_monte_carlo_serial(scenario: &Scenario) -> Result<McReport, HarnessError> {
    scenario.validate()?;
    let outcomes: Vec<Vec<EstOutcome>> =
        (0..scenario.replicates).map(|r| replicate(scenario, r)).collect();
    Ok(aggregate(scenario, outcomes))
}
