//! Price-series ingestion: CSV of dated closing prices to a returns [`Series`].

use std::path::Path;

use crate::dar::Series;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnKind {
    /// `r_t = scale * ln(P_t / P_{t-1})`.
    Log,
    /// `r_t = scale * (P_t / P_{t-1} - 1)`.
    Simple,
}

#[derive(Debug, Clone, Copy)]
pub struct ReturnsConfig {
    pub kind: ReturnKind,
    pub scale: f64,
    /// Leading returns moved into the series presample (typically the model order).
    pub presample: usize,
}

impl Default for ReturnsConfig {
    /// Percent log returns: the usual convention for daily equity indices.
    fn default() -> Self {
        Self { kind: ReturnKind::Log, scale: 100.0, presample: 0 }
    }
}

/// Parses `date,close` CSV text into a returns series.
///
/// The header is required, closes must be positive, and dates must be strictly
/// increasing. Dates are compared lexicographically, which matches chronological
/// order for ISO-8601 dates (`YYYY-MM-DD`); other formats only need to be
/// consistent with that rule.
pub fn parse_returns(text: &str, cfg: &ReturnsConfig) -> Result<Series, HarnessError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim())
        .ok_or_else(|| HarnessError::MalformedCsv("empty file".into()))?;
    let mut cols = header.split(',').map(str::trim);
    if !(cols.next() == Some("date") && cols.next() == Some("close") && cols.next().is_none()) {
        return Err(HarnessError::MalformedCsv(format!(
            "expected header `date,close`, got `{header}`"
        )));
    }

    let mut dates: Vec<String> = Vec::new();
    let mut closes: Vec<f64> = Vec::new();
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let row = closes.len() + 1;
        let (date, close) = line.split_once(',').ok_or_else(|| {
            HarnessError::MalformedCsv(format!("line {}: expected `date,close`", i + 1))
        })?;
        let close: f64 = close.trim().parse().map_err(|_| {
            HarnessError::MalformedCsv(format!("line {}: bad close `{}`", i + 1, close.trim()))
        })?;
        if !(close.is_finite() && close > 0.0) {
            return Err(HarnessError::NonPositivePrice { row, value: close });
        }
        let date = date.trim().to_string();
        if let Some(prev) = dates.last() {
            if *prev >= date {
                return Err(HarnessError::NonMonotoneDates { row });
            }
        }
        dates.push(date);
        closes.push(close);
    }
    if closes.len() < 2 {
        return Err(HarnessError::MalformedCsv(
            "need at least two price rows to form returns".into(),
        ));
    }

    let mut returns: Vec<f64> = closes
        .windows(2)
        .map(|w| {
            let ratio = w[1] / w[0];
            match cfg.kind {
                ReturnKind::Log => cfg.scale * ratio.ln(),
                ReturnKind::Simple => cfg.scale * (ratio - 1.0),
            }
        })
        .collect();
    if cfg.presample >= returns.len() {
        return Err(HarnessError::MalformedCsv(format!(
            "presample {} leaves no observations out of {} returns",
            cfg.presample,
            returns.len()
        )));
    }
    let values = returns.split_off(cfg.presample);
    Ok(Series::new(values, returns))
}

/// [`parse_returns`] on the contents of a file.
pub fn load_returns<P: AsRef<Path>>(path: P, cfg: &ReturnsConfig) -> Result<Series, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_returns(&text, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ReturnKind, scale: f64) -> ReturnsConfig {
        ReturnsConfig { kind, scale, presample: 0 }
    }

    #[test]
    fn log_return_hand_value() {
        let s = parse_returns(
            "date,close\n2020-01-01,100\n2020-01-02,101\n",
            &cfg(ReturnKind::Log, 1.0),
        )
        .unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.values[0] - 0.00995033).abs() < 1e-8);
    }

    #[test]
    fn constant_prices_give_zero_returns() {
        let s = parse_returns(
            "date,close\n2020-01-01,42\n2020-01-02,42\n2020-01-03,42\n",
            &cfg(ReturnKind::Simple, 1.0),
        )
        .unwrap();
        assert_eq!(s.values, vec![0.0, 0.0]);
    }

    #[test]
    fn scale_is_exact_linearity() {
        let text = "date,close\n2020-01-01,100\n2020-01-02,103.5\n2020-01-03,99.2\n";
        let unit = parse_returns(text, &cfg(ReturnKind::Log, 1.0)).unwrap();
        let pct = parse_returns(text, &cfg(ReturnKind::Log, 100.0)).unwrap();
        for (a, b) in unit.values.iter().zip(&pct.values) {
            assert_eq!(*b, 100.0 * *a);
        }
    }

    #[test]
    fn log_and_simple_agree_to_first_order() {
        let text = "date,close\n2020-01-01,100\n2020-01-02,100.05\n2020-01-03,100.02\n";
        let lg = parse_returns(text, &cfg(ReturnKind::Log, 1.0)).unwrap();
        let sm = parse_returns(text, &cfg(ReturnKind::Simple, 1.0)).unwrap();
        for (a, b) in lg.values.iter().zip(&sm.values) {
            assert!(b.abs() < 1e-3);
            assert!((a - b).abs() < b * b);
        }
    }

    #[test]
    fn presample_moves_leading_returns() {
        let text = "date,close\n2020-01-01,100\n2020-01-02,101\n2020-01-03,102\n2020-01-04,103\n";
        let s = parse_returns(
            text,
            &ReturnsConfig { kind: ReturnKind::Log, scale: 1.0, presample: 2 },
        )
        .unwrap();
        assert_eq!(s.presample.len(), 2);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn rejects_malformed_inputs() {
        let c = cfg(ReturnKind::Log, 1.0);
        assert!(matches!(
            parse_returns("time,close\n2020-01-01,100\n", &c),
            Err(HarnessError::MalformedCsv(_))
        ));
        assert!(matches!(
            parse_returns("date,close\n2020-01-01,100\n2020-01-02,abc\n", &c),
            Err(HarnessError::MalformedCsv(_))
        ));
        assert!(matches!(
            parse_returns("date,close\n2020-01-01,100\n2020-01-02,-3\n", &c),
            Err(HarnessError::NonPositivePrice { row: 2, .. })
        ));
        assert!(matches!(
            parse_returns("date,close\n2020-01-02,100\n2020-01-01,99\n", &c),
            Err(HarnessError::NonMonotoneDates { row: 2 })
        ));
        assert!(parse_returns("date,close\n2020-01-01,100\n", &c).is_err());
    }
}
