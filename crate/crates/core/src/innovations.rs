//! Innovation laws for simulation and likelihood work, standardized to zero mean
//! and unit variance.
//!
//! Each law is stored together with the affine constants `(shift, scale)` of its raw
//! form, so that `eta = (W - shift)/scale` has exactly the first two moments the DAR
//! recursion assumes. The constants are closed-form:
//!
//! * Student t with `df > 2`: shift 0, scale `sqrt(df/(df-2))`.
//! * Skew normal with shape `theta`: `delta = theta/sqrt(1+theta^2)`, shift
//!   `delta sqrt(2/pi)`, scale `sqrt(1 - 2 delta^2/pi)`.
//! * Two-piece skewed t with tail `q > 2` and asymmetry `lambda in (-1, 1)`: the raw
//!   density is `c (1 + 2w^2/(q(1+lambda sign w)^2))^(-(1+q)/2)` with
//!   `c = Gamma((q+1)/2) / (sqrt(pi q/2) Gamma(q/2))`; integrating the half-components
//!   gives `E[W] = 2 c q lambda/(q-1)` and `E[W^2] = q(1+3 lambda^2)/(2(q-2))`.
//! * Normal mixtures satisfying the moment constraints are already standardized.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::mixture::{self, MixtureError, MixtureParams};
use crate::special::ln_normal_cdf;
use crate::LN_2PI;

#[derive(Debug, Error)]
pub enum InnovationError {
    /// Standardization needs a finite variance: Student t and skewed t require df > 2.
    #[error("law has no finite variance: {0}")]
    UndefinedVariance(String),
    #[error("invalid innovation parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse innovation spec {spec:?}: {reason}")]
    Parse { spec: String, reason: String },
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error("cannot read mixture file {path:?}: {reason}")]
    Io { path: String, reason: String },
}

/// Distribution family of the raw (non-standardized) innovation.
#[derive(Debug, Clone, PartialEq)]
pub enum InnovationLaw {
    StandardNormal,
    StudentT { df: f64 },
    SkewNormal { shape: f64 },
    /// Two-piece skewed t: `tail` degrees of freedom, `asymmetry` in (-1, 1).
    SkewedT { tail: f64, asymmetry: f64 },
    NormalMixture(MixtureParams),
}

/// An innovation law plus its standardization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationSpec {
    law: InnovationLaw,
    shift: f64,
    scale: f64,
}

/// Shift and scale that map the raw law onto zero mean and unit variance.
pub fn standardization_constants(law: &InnovationLaw) -> Result<(f64, f64), InnovationError> {
    match law {
        InnovationLaw::StandardNormal => Ok((0.0, 1.0)),
        InnovationLaw::StudentT { df } => {
            if !(*df > 2.0) {
                return Err(InnovationError::UndefinedVariance(format!(
                    "student t with df = {df}"
                )));
            }
            Ok((0.0, (df / (df - 2.0)).sqrt()))
        }
        InnovationLaw::SkewNormal { shape } => {
            if !shape.is_finite() {
                return Err(InnovationError::InvalidParameter("non-finite shape".into()));
            }
            let delta = shape / (1.0 + shape * shape).sqrt();
            let shift = delta * (2.0 / std::f64::consts::PI).sqrt();
            Ok((shift, (1.0 - shift * shift).sqrt()))
        }
        InnovationLaw::SkewedT { tail, asymmetry } => {
            if !(*tail > 2.0) {
                return Err(InnovationError::UndefinedVariance(format!(
                    "skewed t with tail = {tail}"
                )));
            }
            if !(asymmetry.abs() < 1.0) {
                return Err(InnovationError::InvalidParameter(format!(
                    "skewed t asymmetry {asymmetry} outside (-1, 1)"
                )));
            }
            let c = (ln_gamma((tail + 1.0) / 2.0)
                - ln_gamma(tail / 2.0)
                - 0.5 * (std::f64::consts::PI * tail / 2.0).ln())
            .exp();
            let mean = 2.0 * c * tail * asymmetry / (tail - 1.0);
            let second = tail * (1.0 + 3.0 * asymmetry * asymmetry) / (2.0 * (tail - 2.0));
            Ok((mean, (second - mean * mean).sqrt()))
        }
        InnovationLaw::NormalMixture(params) => {
            let resid = params.constraint_residual();
            if !(resid < 1e-6) {
                return Err(InnovationError::InvalidParameter(format!(
                    "mixture violates moment constraints by {resid:.3e}"
                )));
            }
            Ok((0.0, 1.0))
        }
    }
}

impl InnovationSpec {
    pub fn new(law: InnovationLaw) -> Result<Self, InnovationError> {
        let (shift, scale) = standardization_constants(&law)?;
        Ok(Self { law, shift, scale })
    }

    pub fn standard_normal() -> Self {
        Self { law: InnovationLaw::StandardNormal, shift: 0.0, scale: 1.0 }
    }

    pub fn law(&self) -> &InnovationLaw {
        &self.law
    }

    /// `(shift, scale)` of the raw law; `eta = (W - shift)/scale`.
    pub fn constants(&self) -> (f64, f64) {
        (self.shift, self.scale)
    }

    /// Parses the compact text form:
    /// `normal`, `t:2.5`, `skewnormal:5`, `skewt:2.5,-0.9`, or `mixture:<file>`
    /// where the file holds one mixture record (`K,weights..,means..,scales..`).
    pub fn parse(s: &str) -> Result<Self, InnovationError> {
        let bad = |reason: &str| InnovationError::Parse { spec: s.into(), reason: reason.into() };
        let t = s.trim();
        if t == "normal" {
            return Self::new(InnovationLaw::StandardNormal);
        }
        let (head, rest) = t
            .split_once(':')
            .ok_or_else(|| bad("expected normal | t:df | skewnormal:shape | skewt:tail,asym | mixture:file"))?;
        match head {
            "t" => {
                let df: f64 = rest.trim().parse().map_err(|_| bad("bad degrees of freedom"))?;
                Self::new(InnovationLaw::StudentT { df })
            }
            "skewnormal" => {
                let shape: f64 = rest.trim().parse().map_err(|_| bad("bad shape"))?;
                Self::new(InnovationLaw::SkewNormal { shape })
            }
            "skewt" => {
                let (a, b) = rest.split_once(',').ok_or_else(|| bad("expected tail,asymmetry"))?;
                let tail: f64 = a.trim().parse().map_err(|_| bad("bad tail parameter"))?;
                let asymmetry: f64 = b.trim().parse().map_err(|_| bad("bad asymmetry parameter"))?;
                Self::new(InnovationLaw::SkewedT { tail, asymmetry })
            }
            "mixture" => {
                let path = rest.trim();
                let text = std::fs::read_to_string(path).map_err(|e| InnovationError::Io {
                    path: path.into(),
                    reason: e.to_string(),
                })?;
                let params = MixtureParams::from_record(text.trim())?;
                Self::new(InnovationLaw::NormalMixture(params))
            }
            _ => Err(bad("unknown law")),
        }
    }

    /// Text form that [`parse`](Self::parse) accepts, with mixtures inlined as records.
    pub fn describe(&self) -> String {
        match &self.law {
            InnovationLaw::StandardNormal => "normal".into(),
            InnovationLaw::StudentT { df } => format!("t:{df}"),
            InnovationLaw::SkewNormal { shape } => format!("skewnormal:{shape}"),
            InnovationLaw::SkewedT { tail, asymmetry } => format!("skewt:{tail},{asymmetry}"),
            InnovationLaw::NormalMixture(p) => format!("mixture[{}]", p.to_record()),
        }
    }
}

/// Draws `n` standardized innovations, fully determined by `seed`.
pub fn sample_innovations(spec: &InnovationSpec, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    match &spec.law {
        InnovationLaw::StandardNormal => (0..n).map(|_| normal.sample(&mut rng)).collect(),
        InnovationLaw::StudentT { df } => {
            let chi = ChiSquared::new(*df).expect("df > 2 checked at construction");
            (0..n)
                .map(|_| {
                    let z: f64 = normal.sample(&mut rng);
                    let c: f64 = chi.sample(&mut rng);
                    z / (c / df).sqrt() / spec.scale
                })
                .collect()
        }
        InnovationLaw::SkewNormal { shape } => {
            let norm = (1.0 + shape * shape).sqrt();
            (0..n)
                .map(|_| {
                    let u1: f64 = normal.sample(&mut rng);
                    let u2: f64 = normal.sample(&mut rng);
                    let raw = (shape * u1.abs() + u2) / norm;
                    (raw - spec.shift) / spec.scale
                })
                .collect()
        }
        InnovationLaw::SkewedT { tail, asymmetry } => {
            let chi = ChiSquared::new(*tail).expect("tail > 2 checked at construction");
            let p_right = (1.0 + asymmetry) / 2.0;
            (0..n)
                .map(|_| {
                    let z: f64 = normal.sample(&mut rng);
                    let c: f64 = chi.sample(&mut rng);
                    let t = z / (c / tail).sqrt();
                    let u: f64 = rng.gen();
                    let raw = if u < p_right {
                        (1.0 + asymmetry) * t.abs() / std::f64::consts::SQRT_2
                    } else {
                        -(1.0 - asymmetry) * t.abs() / std::f64::consts::SQRT_2
                    };
                    (raw - spec.shift) / spec.scale
                })
                .collect()
        }
        InnovationLaw::NormalMixture(params) => mixture::sample(params, n, seed),
    }
}

/// Log density of the standardized innovation at `x`.
pub fn log_pdf(spec: &InnovationSpec, x: f64) -> f64 {
    let raw = spec.shift + spec.scale * x;
    let ln_jacobian = spec.scale.ln();
    match &spec.law {
        InnovationLaw::StandardNormal => -0.5 * (LN_2PI + x * x),
        InnovationLaw::StudentT { df } => {
            ln_gamma((df + 1.0) / 2.0)
                - ln_gamma(df / 2.0)
                - 0.5 * (df * std::f64::consts::PI).ln()
                - 0.5 * (df + 1.0) * (1.0 + raw * raw / df).ln()
                + ln_jacobian
        }
        InnovationLaw::SkewNormal { shape } => {
            std::f64::consts::LN_2 - 0.5 * (LN_2PI + raw * raw) + ln_normal_cdf(shape * raw)
                + ln_jacobian
        }
        InnovationLaw::SkewedT { tail, asymmetry } => {
            let side = if raw >= 0.0 { 1.0 + asymmetry } else { 1.0 - asymmetry };
            let ln_c = ln_gamma((tail + 1.0) / 2.0)
                - ln_gamma(tail / 2.0)
                - 0.5 * (std::f64::consts::PI * tail / 2.0).ln();
            ln_c - 0.5 * (1.0 + tail) * (1.0 + 2.0 * raw * raw / (tail * side * side)).ln()
                + ln_jacobian
        }
        InnovationLaw::NormalMixture(params) => mixture::log_density(params, x),
    }
}
