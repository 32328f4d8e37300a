//! Constrained univariate normal mixtures used as quasi-likelihood innovation densities.
//!
//! A K-component mixture with weights `p_k`, means `mu_k` and scales `sigma_k` is pinned
//! to zero mean and unit variance:
//!
//! ```text
//!   sum_k p_k = 1,    sum_k p_k mu_k = 0,    sum_k p_k (mu_k^2 + sigma_k^2) = 1.
//! ```
//!
//! Those three constraints make the last component redundant, so the free
//! parameterization keeps only the first K-1 weights, means and scales;
//! [`complete_params`] recovers `(p_K, mu_K, sigma_K)` and rejects free points whose
//! implied component would be degenerate. K = 1 has no free coordinates at all: the
//! mixture collapses to the standard normal.

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::LN_2PI;

/// Implied variance of the completed component must exceed this, in variance units.
pub const SIGMA_K_SQ_MIN: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum MixtureError {
    /// The free point implies a non-positive last weight or a degenerate last scale.
    #[error("free point implies a degenerate completed component: {0}")]
    InfeasiblePoint(String),
    /// Array lengths disagree or contain non-finite entries.
    #[error("invalid mixture parameterization: {0}")]
    InvalidShape(String),
    /// A serialized record failed to parse or violates the moment constraints.
    #[error("malformed mixture record: {0}")]
    MalformedRecord(String),
}

/// Free coordinates of a K-component constrained mixture: the first K-1 weights,
/// means and scales. Empty for K = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFree {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl MixtureFree {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, scales: Vec<f64>) -> Result<Self, MixtureError> {
        if weights.len() != means.len() || weights.len() != scales.len() {
            return Err(MixtureError::InvalidShape(format!(
                "free arrays must share one length, got {}/{}/{}",
                weights.len(),
                means.len(),
                scales.len()
            )));
        }
        if weights
            .iter()
            .chain(&means)
            .chain(&scales)
            .any(|v| !v.is_finite())
        {
            return Err(MixtureError::InvalidShape("non-finite entry".into()));
        }
        Ok(Self { weights, means, scales })
    }

    /// K = 1: no free coordinates, completion is the standard normal.
    pub fn standard_normal() -> Self {
        Self { weights: Vec::new(), means: Vec::new(), scales: Vec::new() }
    }

    /// Number of mixture components this free point parameterizes.
    pub fn k(&self) -> usize {
        self.weights.len() + 1
    }

    /// Number of free coordinates, 3(K-1).
    pub fn dim(&self) -> usize {
        3 * self.weights.len()
    }
}

/// Fully specified mixture satisfying the zero-mean unit-variance constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl MixtureParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Builds a constrained mixture from arbitrary positive-weight components by
    /// normalizing the weights and affinely standardizing to zero mean, unit variance.
    pub fn standardized(
        weights: &[f64],
        means: &[f64],
        scales: &[f64],
    ) -> Result<Self, MixtureError> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != scales.len() {
            return Err(MixtureError::InvalidShape(
                "component arrays must share one positive length".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || scales.iter().any(|&s| !(s > 0.0)) {
            return Err(MixtureError::InvalidShape(
                "weights and scales must be positive".into(),
            ));
        }
        let wsum: f64 = weights.iter().sum();
        let w: Vec<f64> = weights.iter().map(|&x| x / wsum).collect();
        let mean: f64 = w.iter().zip(means).map(|(&wi, &mi)| wi * mi).sum();
        let var: f64 = w
            .iter()
            .zip(means)
            .zip(scales)
            .map(|((&wi, &mi), &si)| wi * ((mi - mean).powi(2) + si * si))
            .sum();
        if !(var > 0.0) {
            return Err(MixtureError::InvalidShape("zero total variance".into()));
        }
        let sd = var.sqrt();
        Ok(Self {
            weights: w,
            means: means.iter().map(|&m| (m - mean) / sd).collect(),
            scales: scales.iter().map(|&s| s / sd).collect(),
        })
    }

    /// Largest violation of the three moment constraints.
    pub fn constraint_residual(&self) -> f64 {
        let r1 = (self.weights.iter().sum::<f64>() - 1.0).abs();
        let r2 = self
            .weights
            .iter()
            .zip(&self.means)
            .map(|(&w, &m)| w * m)
            .sum::<f64>()
            .abs();
        let r3 = (self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((&w, &m), &s)| w * (m * m + s * s))
            .sum::<f64>()
            - 1.0)
            .abs();
        r1.max(r2).max(r3)
    }

    /// Free coordinates (first K-1 components) of this mixture.
    pub fn to_free(&self) -> MixtureFree {
        let k = self.k();
        MixtureFree {
            weights: self.weights[..k - 1].to_vec(),
            means: self.means[..k - 1].to_vec(),
            scales: self.scales[..k - 1].to_vec(),
        }
    }

    /// One-line CSV record: `K, weights.., means.., scales..` at 17 significant digits.
    pub fn to_record(&self) -> String {
        let mut out = format!("{}", self.k());
        for v in self.weights.iter().chain(&self.means).chain(&self.scales) {
            out.push_str(&format!(",{:.16e}", v));
        }
        out
    }

    /// Parses [`to_record`](Self::to_record) output and re-checks the constraints.
    pub fn from_record(s: &str) -> Result<Self, MixtureError> {
        let fields: Vec<&str> = s.trim().split(',').collect();
        let k: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| MixtureError::MalformedRecord(format!("bad component count {:?}", fields[0])))?;
        if k == 0 || fields.len() != 1 + 3 * k {
            return Err(MixtureError::MalformedRecord(format!(
                "expected 1 + 3K fields for K = {k}, got {}",
                fields.len()
            )));
        }
        let nums: Vec<f64> = fields[1..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| MixtureError::MalformedRecord(format!("bad number {f:?}")))
            })
            .collect::<Result<_, _>>()?;
        let params = Self {
            weights: nums[..k].to_vec(),
            means: nums[k..2 * k].to_vec(),
            scales: nums[2 * k..].to_vec(),
        };
        if params.weights.iter().any(|&w| !(w > 0.0)) || params.scales.iter().any(|&s| !(s > 0.0)) {
            return Err(MixtureError::MalformedRecord(
                "weights and scales must be positive".into(),
            ));
        }
        let resid = params.constraint_residual();
        if !(resid < 1e-6) {
            return Err(MixtureError::MalformedRecord(format!(
                "moment constraints violated by {resid:.3e}"
            )));
        }
        Ok(params)
    }
}

/// Completes a free point into the full K-component mixture.
///
/// The implied last component is
///
/// ```text
///   p_K     = 1 - sum_{k<K} p_k
///   mu_K    = -(sum_{k<K} p_k mu_k) / p_K
///   sigma_K = sqrt((1 - sum_{k<K} p_k (mu_k^2 + sigma_k^2) - p_K mu_K^2) / p_K)
/// ```
///
/// Errors with [`MixtureError::InfeasiblePoint`] when `p_K <= 0` or the variance
/// radicand does not exceed [`SIGMA_K_SQ_MIN`].
pub fn complete_params(free: &MixtureFree) -> Result<MixtureParams, MixtureError> {
    let km1 = free.weights.len();
    if free.means.len() != km1 || free.scales.len() != km1 {
        return Err(MixtureError::InvalidShape(
            "free arrays must share one length".into(),
        ));
    }
    if km1 == 0 {
        return Ok(MixtureParams { weights: vec![1.0], means: vec![0.0], scales: vec![1.0] });
    }
    if free.weights.iter().any(|&w| !(w > 0.0)) {
        return Err(MixtureError::InfeasiblePoint("free weight not positive".into()));
    }
    if free.scales.iter().any(|&s| !(s > 0.0)) {
        return Err(MixtureError::InfeasiblePoint("free scale not positive".into()));
    }
    let wsum: f64 = free.weights.iter().sum();
    let p_last = 1.0 - wsum;
    if !(p_last > 0.0) {
        return Err(MixtureError::InfeasiblePoint(format!(
            "last weight 1 - sum p_k = {p_last:.3e} not positive"
        )));
    }
    let wm: f64 = free.weights.iter().zip(&free.means).map(|(&w, &m)| w * m).sum();
    let mu_last = -wm / p_last;
    let second: f64 = free
        .weights
        .iter()
        .zip(&free.means)
        .zip(&free.scales)
        .map(|((&w, &m), &s)| w * (m * m + s * s))
        .sum();
    let var_last = (1.0 - second - p_last * mu_last * mu_last) / p_last;
    if !(var_last > SIGMA_K_SQ_MIN) {
        return Err(MixtureError::InfeasiblePoint(format!(
            "implied last variance {var_last:.3e} below floor"
        )));
    }
    let mut weights = free.weights.clone();
    let mut means = free.means.clone();
    let mut scales = free.scales.clone();
    weights.push(p_last);
    means.push(mu_last);
    scales.push(var_last.sqrt());
    Ok(MixtureParams { weights, means, scales })
}

/// Log density of the mixture at `x`, evaluated with the log-sum-exp trick so that
/// points far in the tails return a finite large-negative value instead of `-inf`.
pub fn log_density(params: &MixtureParams, x: f64) -> f64 {
    let mut terms = [0.0f64; 8];
    let k = params.k();
    let mut heap;
    let buf: &mut [f64] = if k <= 8 {
        &mut terms[..k]
    } else {
        heap = vec![0.0; k];
        &mut heap
    };
    let mut max = f64::NEG_INFINITY;
    for i in 0..k {
        let z = (x - params.means[i]) / params.scales[i];
        let t = params.weights[i].ln() - params.scales[i].ln() - 0.5 * (LN_2PI + z * z);
        buf[i] = t;
        if t > max {
            max = t;
        }
    }
    max + buf.iter().map(|&t| (t - max).exp()).sum::<f64>().ln()
}

/// Posterior component probabilities for each residual; rows sum to one.
pub fn responsibilities(params: &MixtureParams, residuals: &[f64]) -> Vec<Vec<f64>> {
    let k = params.k();
    residuals
        .iter()
        .map(|&x| {
            let mut row: Vec<f64> = (0..k)
                .map(|i| {
                    let z = (x - params.means[i]) / params.scales[i];
                    params.weights[i].ln() - params.scales[i].ln() - 0.5 * z * z
                })
                .collect();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for r in row.iter_mut() {
                *r = (*r - max).exp();
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
            row
        })
        .collect()
}

/// Draws `n` iid samples from the mixture, fully determined by `seed`.
pub fn sample(params: &MixtureParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::StandardNormal;
    let mut cum = Vec::with_capacity(params.k());
    let mut acc = 0.0;
    for &w in &params.weights {
        acc += w;
        cum.push(acc);
    }
    (0..n)
        .map(|_| {
            let u: f64 = rand::Rng::gen(&mut rng);
            let comp = cum.iter().position(|&c| u <= c).unwrap_or(params.k() - 1);
            let z: f64 = normal.sample(&mut rng);
            params.means[comp] + params.scales[comp] * z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn free2(p: f64, m: f64, s: f64) -> MixtureFree {
        MixtureFree::new(vec![p], vec![m], vec![s]).unwrap()
    }

    #[test]
    fn k1_completion_is_standard_normal() {
        let p = complete_params(&MixtureFree::standard_normal()).unwrap();
        assert_eq!(p.weights, vec![1.0]);
        assert_eq!(p.means, vec![0.0]);
        assert_eq!(p.scales, vec![1.0]);
    }

    #[test]
    fn symmetric_two_component_completion() {
        let p = complete_params(&free2(0.5, -0.5, 0.75f64.sqrt())).unwrap();
        assert!((p.weights[1] - 0.5).abs() < 1e-15);
        assert!((p.means[1] - 0.5).abs() < 1e-15);
        assert!((p.scales[1] - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_two_component_completion() {
        let p = complete_params(&free2(0.3, -1.0, 0.5)).unwrap();
        assert!((p.weights[1] - 0.7).abs() < 1e-15);
        assert!((p.means[1] - 0.3 / 0.7).abs() < 1e-15);
        // sigma_2^2 = (1 - 0.3 (1 + 0.25) - 0.7 mu_2^2) / 0.7
        let mu2: f64 = 0.3 / 0.7;
        let s2 = ((1.0 - 0.3 * 1.25 - 0.7 * mu2 * mu2) / 0.7).sqrt();
        assert!((p.scales[1] - s2).abs() < 1e-15);
        assert!((p.scales[1] - 0.842131).abs() < 1e-6);
        assert!(p.constraint_residual() < 1e-12);
    }

    #[test]
    fn infeasible_points_are_rejected() {
        // Weights already exhaust the unit budget.
        assert!(matches!(
            complete_params(&free2(1.0, 0.0, 0.5)),
            Err(MixtureError::InfeasiblePoint(_))
        ));
        // Free second moment leaves nothing for the last component's variance.
        assert!(matches!(
            complete_params(&free2(0.5, 1.0, 1.0)),
            Err(MixtureError::InfeasiblePoint(_))
        ));
    }

    #[test]
    fn log_density_matches_closed_forms() {
        let std = complete_params(&MixtureFree::standard_normal()).unwrap();
        assert!((log_density(&std, 0.0) + 0.9189385332046727).abs() < 1e-15);
        assert!((log_density(&std, 2.0) - (-0.5 * 4.0 - 0.9189385332046727)).abs() < 1e-14);

        let sym = complete_params(&free2(0.5, -0.5, 0.75f64.sqrt())).unwrap();
        let dens: f64 = 0.3899393114454823;
        assert!((log_density(&sym, 0.0) - dens.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_density_is_finite_far_out() {
        let p = complete_params(&free2(0.3, -1.0, 0.5)).unwrap();
        let v = log_density(&p, 40.0);
        assert!(v.is_finite() && v < -500.0);
    }

    #[test]
    fn responsibilities_rows_sum_to_one() {
        let p = complete_params(&free2(0.3, -1.0, 0.5)).unwrap();
        let xs = [-3.0, -1.0, 0.0, 0.4, 2.5];
        let r = responsibilities(&p, &xs);
        for row in &r {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        // At x = -1 the first component (mean -1, scale 0.5) dominates.
        assert!(r[1][0] > 0.5);
    }

    #[test]
    fn k1_responsibilities_are_unit() {
        let p = complete_params(&MixtureFree::standard_normal()).unwrap();
        for row in responsibilities(&p, &[-2.0, 0.0, 7.0]) {
            assert_eq!(row, vec![1.0]);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let p = complete_params(&free2(0.3, -1.0, 0.5)).unwrap();
        assert_eq!(sample(&p, 100, 7), sample(&p, 100, 7));
        assert_ne!(sample(&p, 100, 7), sample(&p, 100, 8));
    }

    #[test]
    fn sample_moments_match_constraints() {
        let p = complete_params(&free2(0.3, -1.0, 0.5)).unwrap();
        let xs = sample(&p, 200_000, 42);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn record_round_trips() {
        let p = complete_params(&free2(0.3, -1.0, 0.5)).unwrap();
        let q = MixtureParams::from_record(&p.to_record()).unwrap();
        for (a, b) in p.weights.iter().zip(&q.weights) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in p.means.iter().zip(&q.means).chain(p.scales.iter().zip(&q.scales)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn malformed_records_error() {
        assert!(MixtureParams::from_record("x,1,2").is_err());
        assert!(MixtureParams::from_record("2,0.5,0.5,0.0").is_err());
        // Right shape, wrong moments.
        assert!(MixtureParams::from_record("1,1.0,0.5,1.0").is_err());
    }

    #[test]
    fn standardized_recenters_and_rescales() {
        let p = MixtureParams::standardized(&[1.0, 1.0, 1.0], &[-3.0, 0.0, 3.0], &[
            0.5f64.sqrt(),
            0.5f64.sqrt(),
            0.5f64.sqrt(),
        ])
        .unwrap();
        assert!(p.constraint_residual() < 1e-12);
        // Total raw variance 6.5 shrinks the means to +-3/sqrt(6.5).
        assert!((p.means[2] - 3.0 / 6.5f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn feasible_completions_satisfy_constraints(
            k in 1usize..4,
            raw in proptest::collection::vec(0.05f64..0.95, 3),
            means in proptest::collection::vec(-1.2f64..1.2, 3),
            scales in proptest::collection::vec(0.1f64..1.0, 3),
        ) {
            let km1 = k - 1;
            // Scale raw weights into the open simplex.
            let wsum: f64 = raw[..km1].iter().sum();
            let weights: Vec<f64> = raw[..km1].iter().map(|w| 0.8 * w / wsum.max(1e-9) * (km1 as f64) / 3.0).collect();
            let free = MixtureFree::new(weights, means[..km1].to_vec(), scales[..km1].to_vec()).unwrap();
            if let Ok(params) = complete_params(&free) {
                prop_assert!(params.constraint_residual() < 1e-10);
                prop_assert!(params.weights.iter().all(|&w| w > 0.0));
                prop_assert!(params.scales.iter().all(|&s| s > 0.0));
                // Free-coordinate round trip reproduces the same completion.
                let again = complete_params(&params.to_free()).unwrap();
                for (a, b) in params.means.iter().zip(&again.means) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn standardized_always_feasible(
            k in 1usize..5,
            weights in proptest::collection::vec(0.05f64..1.0, 4),
            means in proptest::collection::vec(-4.0f64..4.0, 4),
            scales in proptest::collection::vec(0.05f64..2.0, 4),
        ) {
            let p = MixtureParams::standardized(&weights[..k], &means[..k], &scales[..k]).unwrap();
            prop_assert!(p.constraint_residual() < 1e-10);
        }
    }
}
