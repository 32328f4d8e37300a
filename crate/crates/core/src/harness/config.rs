//! Scenario description and its keyed-text configuration format.
//!
//! A scenario file is plain text, one `key = value` per line, `#` comments and
//! blank lines ignored. Keys:
//!
//! ```text
//!   phi        = 0.3,0.1        # AR coefficients (length sets the order p)
//!   omega      = 1.0
//!   alpha      = 0.5,0.2        # same length as phi
//!   innovation = t:2.5          # normal | t:df | skewnormal:shape |
//!                               # skewt:tail,asym | mixture:<file>
//!   n          = 1000
//!   replicates = 200
//!   estimators = mle,gaussian_qmle,two_stage_qmle,nmqmle
//!   k          = 2              # fixed-K policy ... or instead:
//!   select     = icl            # aic|bic|icl|ddse|djump
//!   k_min      = 2
//!   k_max      = 10
//!   base_seed  = 1
//!   burn_in    = 500            # optional
//!   starts     = 8              # optional optimizer restarts
//! ```

use std::collections::BTreeMap;

use crate::dar::DarParams;
use crate::innovations::InnovationSpec;
use crate::select::{Criterion, SlopeMethod};

use super::HarnessError;

/// How the NM-QMLE estimator obtains its component count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KPolicy {
    Fixed(usize),
    Select { rule: SelectionRule, k_min: usize, k_max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    Aic,
    Bic,
    Icl,
    Ddse,
    Djump,
}

impl SelectionRule {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "aic" => Some(Self::Aic),
            "bic" => Some(Self::Bic),
            "icl" => Some(Self::Icl),
            "ddse" => Some(Self::Ddse),
            "djump" => Some(Self::Djump),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Aic => "aic",
            Self::Bic => "bic",
            Self::Icl => "icl",
            Self::Ddse => "ddse",
            Self::Djump => "djump",
        }
    }

    pub(crate) fn criterion(self) -> Option<Criterion> {
        match self {
            Self::Aic => Some(Criterion::Aic),
            Self::Bic => Some(Criterion::Bic),
            Self::Icl => Some(Criterion::Icl),
            _ => None,
        }
    }

    pub(crate) fn slope_method(self) -> Option<SlopeMethod> {
        match self {
            Self::Ddse => Some(SlopeMethod::Ddse),
            Self::Djump => Some(SlopeMethod::Djump),
            _ => None,
        }
    }
}

/// Estimators a Monte Carlo study can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McEstimator {
    /// Full ML under the scenario's (known) innovation law.
    Mle,
    /// Gaussian QMLE.
    GaussianQmle,
    /// Two-stage baseline: least-squares mean fit, Gaussian volatility fit on
    /// its residuals.
    TwoStageQmle,
    /// Normal-mixture QMLE with K chosen by the scenario's `k_policy`.
    NmQmle,
    /// Returns the true parameters; a calibration reference for the harness itself.
    Oracle,
}

impl McEstimator {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mle" => Some(Self::Mle),
            "gaussian_qmle" | "qmle" => Some(Self::GaussianQmle),
            "two_stage_qmle" | "two_stage" => Some(Self::TwoStageQmle),
            "nmqmle" | "nm_qmle" => Some(Self::NmQmle),
            "oracle" => Some(Self::Oracle),
            _ => None,
        }
    }
}

/// One Monte Carlo experiment design.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub dar_params: DarParams,
    pub innovation: InnovationSpec,
    pub n: usize,
    pub replicates: usize,
    pub estimators: Vec<McEstimator>,
    pub k_policy: KPolicy,
    pub base_seed: u64,
    pub burn_in: usize,
    /// Optimizer restarts per fit.
    pub starts: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replicates < 1 {
            return Err(HarnessError::InvalidScenario("replicates must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::InvalidScenario("estimators must be nonempty".into()));
        }
        if self.n <= self.dar_params.order() {
            return Err(HarnessError::InvalidScenario(format!(
                "sample size {} too small for order {}",
                self.n,
                self.dar_params.order()
            )));
        }
        match &self.k_policy {
            KPolicy::Fixed(k) if *k == 0 => {
                Err(HarnessError::InvalidScenario("fixed K must be positive".into()))
            }
            KPolicy::Select { k_min, k_max, .. } if *k_min == 0 || k_min > k_max => {
                Err(HarnessError::InvalidScenario(format!("bad K range {k_min}..={k_max}")))
            }
            _ => Ok(()),
        }
    }
}

/// Splits keyed plain text into a key -> value map, rejecting unknown keys.
fn keyed_map<'a>(
    text: &'a str,
    allowed: &[&str],
) -> Result<BTreeMap<&'a str, &'a str>, HarnessError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            HarnessError::InvalidScenario(format!("line {}: expected `key = value`", i + 1))
        })?;
        let key = key.trim();
        if !allowed.contains(&key) {
            return Err(HarnessError::InvalidScenario(format!("line {}: unknown key `{key}`", i + 1)));
        }
        if map.insert(key, value.trim()).is_some() {
            return Err(HarnessError::InvalidScenario(format!("duplicate key `{key}`")));
        }
    }
    Ok(map)
}

fn parse_f64_list(s: &str, key: &str) -> Result<Vec<f64>, HarnessError> {
    s.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| {
                HarnessError::InvalidScenario(format!("{key}: cannot parse `{tok}` as a number"))
            })
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(s: &str, key: &str) -> Result<T, HarnessError> {
    s.trim()
        .parse::<T>()
        .map_err(|_| HarnessError::InvalidScenario(format!("{key}: cannot parse `{s}`")))
}

/// Parses a scenario configuration from keyed plain text.
pub fn parse_scenario(text: &str) -> Result<Scenario, HarnessError> {
    const KEYS: &[&str] = &[
        "phi", "omega", "alpha", "innovation", "n", "replicates", "estimators", "k", "select",
        "k_min", "k_max", "base_seed", "burn_in", "starts",
    ];
    let map = keyed_map(text, KEYS)?;
    let need = |key: &str| {
        map.get(key)
            .copied()
            .ok_or_else(|| HarnessError::InvalidScenario(format!("missing key `{key}`")))
    };

    let phi = parse_f64_list(need("phi")?, "phi")?;
    let omega: f64 = parse_num(need("omega")?, "omega")?;
    let alpha = parse_f64_list(need("alpha")?, "alpha")?;
    let dar_params = DarParams::new(phi, omega, alpha)
        .map_err(|e| HarnessError::InvalidScenario(e.to_string()))?;
    let innovation = InnovationSpec::parse(need("innovation")?)?;

    let estimators: Vec<McEstimator> = need("estimators")?
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            McEstimator::parse(tok)
                .ok_or_else(|| HarnessError::InvalidScenario(format!("unknown estimator `{tok}`")))
        })
        .collect::<Result<_, _>>()?;

    let k_policy = match (map.get("k"), map.get("select")) {
        (Some(k), None) => KPolicy::Fixed(parse_num(k, "k")?),
        (None, Some(rule)) => {
            let rule = SelectionRule::parse(rule.trim()).ok_or_else(|| {
                HarnessError::InvalidScenario(format!("unknown selection rule `{rule}`"))
            })?;
            KPolicy::Select {
                rule,
                k_min: parse_num(need("k_min")?, "k_min")?,
                k_max: parse_num(need("k_max")?, "k_max")?,
            }
        }
        (Some(_), Some(_)) => {
            return Err(HarnessError::InvalidScenario(
                "specify either `k` or `select`, not both".into(),
            ))
        }
        (None, None) => {
            return Err(HarnessError::InvalidScenario("missing `k` or `select` key".into()))
        }
    };

    let scenario = Scenario {
        dar_params,
        innovation,
        n: parse_num(need("n")?, "n")?,
        replicates: parse_num(need("replicates")?, "replicates")?,
        estimators,
        k_policy,
        base_seed: parse_num(need("base_seed")?, "base_seed")?,
        burn_in: map.get("burn_in").map_or(Ok(500), |s| parse_num(s, "burn_in"))?,
        starts: map.get("starts").map_or(Ok(8), |s| parse_num(s, "starts"))?,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
# comment line
phi = 0.3, 0.1
omega = 1.0
alpha = 0.5, 0.2
innovation = t:2.5
n = 1000
replicates = 200
estimators = mle, gaussian_qmle, nmqmle
k = 2
base_seed = 7
";

    #[test]
    fn parses_a_full_scenario() {
        let s = parse_scenario(BASE).unwrap();
        assert_eq!(s.dar_params.order(), 2);
        assert_eq!(s.dar_params.phi, vec![0.3, 0.1]);
        assert_eq!(s.n, 1000);
        assert_eq!(s.replicates, 200);
        assert_eq!(s.estimators.len(), 3);
        assert_eq!(s.k_policy, KPolicy::Fixed(2));
        assert_eq!(s.base_seed, 7);
        assert_eq!(s.burn_in, 500);
        assert_eq!(s.starts, 8);
    }

    #[test]
    fn parses_a_selection_policy() {
        let text = BASE.replace("k = 2", "select = icl\nk_min = 2\nk_max = 10");
        let s = parse_scenario(&text).unwrap();
        assert_eq!(
            s.k_policy,
            KPolicy::Select { rule: SelectionRule::Icl, k_min: 2, k_max: 10 }
        );
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(parse_scenario(&BASE.replace("k = 2", "")).is_err());
        assert!(parse_scenario(&BASE.replace("omega = 1.0", "omega = -1.0")).is_err());
        assert!(parse_scenario(&format!("{BASE}unknown_key = 3\n")).is_err());
        assert!(parse_scenario(&BASE.replace("replicates = 200", "replicates = 0")).is_err());
        assert!(parse_scenario(&BASE.replace("k = 2", "k = 2\nselect = bic")).is_err());
        assert!(parse_scenario(&BASE.replace("estimators = mle, gaussian_qmle, nmqmle", "estimators = nope")).is_err());
        // Mismatched lag lengths reach the DarParams validator.
        assert!(parse_scenario(&BASE.replace("alpha = 0.5, 0.2", "alpha = 0.5")).is_err());
    }
}
