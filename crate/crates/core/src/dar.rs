//! The double autoregressive process: simulation, conditional moments, residuals,
//! and the second-moment stationarity check.
//!
//! A DAR(p) path follows
//!
//! ```text
//!   y_t = m_t + eta_t sqrt(h_t),
//!   m_t = sum_j phi_j y_{t-j},
//!   h_t = omega + sum_j alpha_j y_{t-j}^2,
//! ```
//!
//! with `omega > 0` and every `alpha_j > 0`, so the conditional variance is bounded
//! away from zero. Strict stationarity with finite second moment holds when the
//! spectral radius of `E[A_t (x) A_t]` is below one, where `A_t` is the companion
//! matrix whose random first row has entries `phi_j + sqrt(alpha_j) eta_t`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DarError {
    #[error("invalid DAR parameters: {0}")]
    InvalidParameters(String),
    /// Simulation left double range; the parameter point is explosive.
    #[error("simulated state exceeded 1e150 in absolute value at step {0}")]
    NonFiniteState(usize),
    #[error("time index {t} outside 1..={n}")]
    IndexOutOfRange { t: i64, n: usize },
    /// The operation needs `p` presample values and the series carries fewer.
    #[error("presample holds {have} values but order {p} is required")]
    InsufficientPresample { have: usize, p: usize },
    #[error("malformed series file: {0}")]
    MalformedSeries(String),
}

/// Structural parameters of a DAR(p) model: `phi` and `alpha` share length `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DarParams {
    pub phi: Vec<f64>,
    pub omega: f64,
    pub alpha: Vec<f64>,
}

impl DarParams {
    pub fn new(phi: Vec<f64>, omega: f64, alpha: Vec<f64>) -> Result<Self, DarError> {
        if phi.is_empty() || phi.len() != alpha.len() {
            return Err(DarError::InvalidParameters(format!(
                "phi and alpha must share a positive length, got {} and {}",
                phi.len(),
                alpha.len()
            )));
        }
        if !phi.iter().all(|v| v.is_finite()) {
            return Err(DarError::InvalidParameters("non-finite phi".into()));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(DarError::InvalidParameters(format!("omega = {omega} must be positive")));
        }
        if !alpha.iter().all(|&a| a > 0.0 && a.is_finite()) {
            return Err(DarError::InvalidParameters("every alpha must be positive".into()));
        }
        Ok(Self { phi, omega, alpha })
    }

    pub fn order(&self) -> usize {
        self.phi.len()
    }
}

/// An observed path `values[0..n]` (times 1..n) plus the `presample` values that
/// precede it in chronological order (times ..., -1, 0). The presample may be
/// empty; estimation never uses it, but simulation round trips and residual
/// computation for the full path do.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub values: Vec<f64>,
    pub presample: Vec<f64>,
}

impl Series {
    pub fn new(values: Vec<f64>, presample: Vec<f64>) -> Self {
        Self { values, presample }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at time `t`, where `t in 1..=n` indexes `values` and `t <= 0` reaches
    /// back into the presample.
    fn at(&self, t: i64) -> Option<f64> {
        if t >= 1 {
            self.values.get(t as usize - 1).copied()
        } else {
            let idx = self.presample.len() as i64 + t - 1;
            if idx >= 0 {
                self.presample.get(idx as usize).copied()
            } else {
                None
            }
        }
    }

    /// Two-column CSV `t,value`; presample rows carry `t <= 0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        let pre = self.presample.len() as i64;
        for (i, v) in self.presample.iter().enumerate() {
            out.push_str(&format!("{},{:.16e}\n", i as i64 + 1 - pre, v));
        }
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{:.16e}\n", i + 1, v));
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output: header `t,value`, consecutive times.
    pub fn from_csv(text: &str) -> Result<Self, DarError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| DarError::MalformedSeries("empty file".into()))?;
        let head_fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if head_fields != ["t", "value"] {
            return Err(DarError::MalformedSeries(format!("expected header t,value got {header:?}")));
        }
        let mut presample = Vec::new();
        let mut values = Vec::new();
        let mut prev_t: Option<i64> = None;
        for line in lines {
            let (ts, vs) = line
                .split_once(',')
                .ok_or_else(|| DarError::MalformedSeries(format!("bad row {line:?}")))?;
            let t: i64 = ts
                .trim()
                .parse()
                .map_err(|_| DarError::MalformedSeries(format!("bad time {ts:?}")))?;
            let v: f64 = vs
                .trim()
                .parse()
                .map_err(|_| DarError::MalformedSeries(format!("bad value {vs:?}")))?;
            if let Some(p) = prev_t {
                if t != p + 1 {
                    return Err(DarError::MalformedSeries(format!(
                        "times must be consecutive, got {p} then {t}"
                    )));
                }
            }
            prev_t = Some(t);
            if t <= 0 {
                presample.push(v);
            } else {
                values.push(v);
            }
        }
        if values.is_empty() {
            return Err(DarError::MalformedSeries("no rows with t >= 1".into()));
        }
        Ok(Self { values, presample })
    }
}

/// Spectral radius of `E[A_t (x) A_t]`; strictly below one means the process has a
/// stationary solution with finite second moment. For p = 1 this is `phi^2 + alpha`.
///
/// The p^2 x p^2 matrix is formed exactly: with `a_k = phi_k + sqrt(alpha_k) eta`,
/// `E[a_k a_l] = phi_k phi_l + alpha_k 1{k=l}` and all other blocks are deterministic
/// companion entries. `E[A (x) A]` maps vectorized positive semidefinite matrices to
/// vectorized positive semidefinite matrices, so its spectral radius is attained by a
/// Perron eigenvector inside that cone and plain power iteration from `vec(I)` converges.
pub fn stationarity_margin(params: &DarParams) -> f64 {
    let p = params.order();
    if p == 1 {
        return params.phi[0] * params.phi[0] + params.alpha[0];
    }
    let d = p * p;
    // m[r][c] with r = (i-1)p + (j-1), c = (k-1)p + (l-1): E[A_ik A_jl].
    let mut m = vec![vec![0.0f64; d]; d];
    for i in 1..=p {
        for j in 1..=p {
            for k in 1..=p {
                for l in 1..=p {
                    let e = match (i, j) {
                        (1, 1) => {
                            params.phi[k - 1] * params.phi[l - 1]
                                + if k == l { params.alpha[k - 1] } else { 0.0 }
                        }
                        (1, _) => {
                            if l == j - 1 {
                                params.phi[k - 1]
                            } else {
                                0.0
                            }
                        }
                        (_, 1) => {
                            if k == i - 1 {
                                params.phi[l - 1]
                            } else {
                                0.0
                            }
                        }
                        _ => {
                            if k == i - 1 && l == j - 1 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    m[(i - 1) * p + (j - 1)][(k - 1) * p + (l - 1)] = e;
                }
            }
        }
    }
    // Power iteration from vec(I).
    let mut v = vec![0.0f64; d];
    for i in 0..p {
        v[i * p + i] = 1.0;
    }
    let mut lambda = 0.0f64;
    for _ in 0..20_000 {
        let mut w = vec![0.0f64; d];
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += m[r][c] * v[c];
            }
            w[r] = acc;
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in w.iter_mut() {
            *x /= norm;
        }
        let done = (next - lambda).abs() < 1e-13 * next.max(1.0);
        lambda = next;
        v = w;
        if done {
            break;
        }
    }
    lambda
}

/// Runs the DAR recursion over the given standardized innovations.
///
/// `presample` supplies the `p` values before the first simulated step in
/// chronological order. The first `burn_in` simulated points are discarded; the
/// returned [`Series`] holds the remaining `innovations.len() - burn_in` values and
/// carries the last `p` pre-observation states as its presample, so residual
/// computation reproduces the supplied innovations exactly.
pub fn simulate(
    params: &DarParams,
    innovations: &[f64],
    presample: &[f64],
    burn_in: usize,
) -> Result<Series, DarError> {
    let p = params.order();
    if presample.len() < p {
        return Err(DarError::InsufficientPresample { have: presample.len(), p });
    }
    if innovations.len() <= burn_in {
        return Err(DarError::InvalidParameters(format!(
            "{} innovations cannot cover burn_in {burn_in}",
            innovations.len()
        )));
    }
    let mut path = Vec::with_capacity(p + innovations.len());
    path.extend_from_slice(&presample[presample.len() - p..]);
    for (step, &eta) in innovations.iter().enumerate() {
        let idx = path.len();
        let mut m = 0.0;
        let mut h = params.omega;
        for j in 0..p {
            let yl = path[idx - 1 - j];
            m += params.phi[j] * yl;
            h += params.alpha[j] * yl * yl;
        }
        let y = m + eta * h.sqrt();
        if !(y.abs() <= 1e150) {
            return Err(DarError::NonFiniteState(step + 1));
        }
        path.push(y);
    }
    let values = path[p + burn_in..].to_vec();
    let presample_out = path[burn_in..p + burn_in].to_vec();
    Ok(Series { values, presample: presample_out })
}

/// Conditional mean and variance `(m_t, h_t)` at time `t in 1..=n`, reaching into the
/// presample when `t <= p`.
pub fn cond_moments(params: &DarParams, series: &Series, t: usize) -> Result<(f64, f64), DarError> {
    let n = series.len();
    if t < 1 || t > n {
        return Err(DarError::IndexOutOfRange { t: t as i64, n });
    }
    let p = params.order();
    let mut m = 0.0;
    let mut h = params.omega;
    for j in 1..=p {
        let s = t as i64 - j as i64;
        let yl = series.at(s).ok_or(DarError::InsufficientPresample {
            have: series.presample.len(),
            p,
        })?;
        m += params.phi[j - 1] * yl;
        h += params.alpha[j - 1] * yl * yl;
    }
    Ok((m, h))
}

/// Standardized residuals `(y_t - m_t)/sqrt(h_t)` for every `t in 1..=n`; requires a
/// presample of at least `p` values.
pub fn residuals(params: &DarParams, series: &Series) -> Result<Vec<f64>, DarError> {
    let p = params.order();
    if series.presample.len() < p {
        return Err(DarError::InsufficientPresample { have: series.presample.len(), p });
    }
    (1..=series.len())
        .map(|t| {
            let (m, h) = cond_moments(params, series, t)?;
            Ok((series.values[t - 1] - m) / h.sqrt())
        })
        .collect()
}
