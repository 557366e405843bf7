//! Weighted averaging of X3D and SlowFast logits, `V = x·X + s·S`, before
//! any activation.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logits::{self, LogitRow};
use crate::metrics::MetricsReport;
use crate::task::Task;

const WEIGHT_TOL: f64 = 1e-9;

/// `x` weighs the X3D logits, `s` the SlowFast logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub x: f64,
    pub s: f64,
}

impl EnsembleWeights {
    pub fn new(x: f64, s: f64) -> Result<Self> {
        let w = Self { x, s };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.x) || !unit.contains(&self.s) {
            return Err(Error::Config(format!("ensemble weights {self:?} must lie in [0, 1]")));
        }
        if (self.x + self.s - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Config(format!(
                "ensemble weights must sum to 1, got {} + {}",
                self.x, self.s
            )));
        }
        Ok(())
    }

    /// The three weightings compared by default: 75/25, 50/50, 25/75.
    pub fn default_grid() -> Vec<EnsembleWeights> {
        [(0.75, 0.25), (0.5, 0.5), (0.25, 0.75)]
            .into_iter()
            .map(|(x, s)| EnsembleWeights { x, s })
            .collect()
    }

    /// Percent split, X3D first: `"25/75"`.
    pub fn label(&self) -> String {
        format!("{}/{}", pct(self.x), pct(self.s))
    }
}

fn pct(v: f64) -> String {
    let p = 100.0 * v;
    if (p - p.round()).abs() < 1e-6 {
        format!("{}", p.round() as i64)
    } else {
        format!("{p:.1}")
    }
}

impl fmt::Display for EnsembleWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Accepts `"0.25,0.75"` or `"25/75"`.
impl FromStr for EnsembleWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (sep, scale) = if s.contains('/') { ('/', 100.0) } else { (',', 1.0) };
        let parts: Vec<&str> = s.split(sep).map(str::trim).collect();
        let bad = || Error::Config(format!("cannot parse ensemble weights `{s}`"));
        if parts.len() != 2 {
            return Err(bad());
        }
        let x: f64 = parts[0].parse().map_err(|_| bad())?;
        let sv: f64 = parts[1].parse().map_err(|_| bad())?;
        EnsembleWeights::new(x / scale, sv / scale)
    }
}

pub fn weighted_average(x_logits: &[f64], s_logits: &[f64], w: EnsembleWeights) -> Result<Vec<f64>> {
    w.validate()?;
    if x_logits.len() != s_logits.len() {
        return Err(Error::shape("ensemble logits", x_logits.len(), s_logits.len()));
    }
    Ok(x_logits
        .iter()
        .zip(s_logits)
        .map(|(a, b)| w.x * a + w.s * b)
        .collect())
}

/// Pair rows of the two dumps by clip id, in the order of `x_rows`.
pub fn align<'a>(x_rows: &'a [LogitRow], s_rows: &'a [LogitRow]) -> Result<Vec<(&'a LogitRow, &'a LogitRow)>> {
    let by_id: HashMap<&str, &LogitRow> = s_rows.iter().map(|r| (r.clip_id.as_str(), r)).collect();
    if by_id.len() != s_rows.len() {
        return Err(Error::Alignment("duplicate clip ids in the SlowFast dump".into()));
    }
    let mut pairs = Vec::with_capacity(x_rows.len());
    for x in x_rows {
        let s = by_id
            .get(x.clip_id.as_str())
            .ok_or_else(|| Error::Alignment(format!("clip {} is missing from the SlowFast dump", x.clip_id)))?;
        if s.label != x.label || s.task != x.task {
            return Err(Error::Alignment(format!(
                "clip {} has different task or label in the two dumps",
                x.clip_id
            )));
        }
        pairs.push((x, *s));
    }
    if x_rows.len() != s_rows.len() {
        let ids: std::collections::HashSet<&str> = x_rows.iter().map(|r| r.clip_id.as_str()).collect();
        let extra = s_rows
            .iter()
            .find(|r| !ids.contains(r.clip_id.as_str()))
            .map(|r| r.clip_id.clone())
            .unwrap_or_default();
        return Err(Error::Alignment(format!("clip {extra} is missing from the X3D dump")));
    }
    Ok(pairs)
}

/// Fused rows for one weighting.
pub fn fuse(x_rows: &[LogitRow], s_rows: &[LogitRow], w: EnsembleWeights) -> Result<Vec<LogitRow>> {
    align(x_rows, s_rows)?
        .into_iter()
        .map(|(x, s)| {
            Ok(LogitRow {
                logits: weighted_average(&x.logits, &s.logits, w)?,
                ..x.clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub weights: EnsembleWeights,
    pub report: MetricsReport,
}

/// One report per weighting, each computed on the fused logits.
pub fn sweep(
    task: Task,
    x_rows: &[LogitRow],
    s_rows: &[LogitRow],
    weights: &[EnsembleWeights],
    threshold: f64,
) -> Result<Vec<SweepRow>> {
    weights
        .iter()
        .map(|&w| {
            let fused = fuse(x_rows, s_rows, w)?;
            Ok(SweepRow {
                label: w.label(),
                weights: w,
                report: logits::report(task, &fused, threshold)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logits::Label;

    fn w(x: f64, s: f64) -> EnsembleWeights {
        EnsembleWeights::new(x, s).unwrap()
    }

    #[test]
    fn small_cases() {
        assert_eq!(weighted_average(&[1.0, 3.0], &[3.0, 1.0], w(0.5, 0.5)).unwrap(), vec![2.0, 2.0]);
        assert_eq!(weighted_average(&[4.0, 0.0], &[0.0, 4.0], w(0.25, 0.75)).unwrap(), vec![1.0, 3.0]);
        assert_eq!(weighted_average(&[1.5, -2.0], &[9.0, 9.0], w(1.0, 0.0)).unwrap(), vec![1.5, -2.0]);
        assert!(weighted_average(&[1.0], &[1.0, 2.0], w(0.5, 0.5)).is_err());
    }

    #[test]
    fn weights_validate_and_parse() {
        assert!(EnsembleWeights::new(0.6, 0.6).is_err());
        assert!(EnsembleWeights::new(-0.5, 1.5).is_err());
        assert_eq!("0.25,0.75".parse::<EnsembleWeights>().unwrap().label(), "25/75");
        assert_eq!("75/25".parse::<EnsembleWeights>().unwrap(), w(0.75, 0.25));
        let labels: Vec<String> = EnsembleWeights::default_grid().iter().map(|w| w.label()).collect();
        assert_eq!(labels, ["75/25", "50/50", "25/75"]);
    }

    fn row(id: &str, logits: Vec<f64>, label: usize) -> LogitRow {
        let mut full = vec![-10.0; 16];
        full[..logits.len()].copy_from_slice(&logits);
        LogitRow {
            clip_id: id.into(),
            task: Task::Ec,
            logits: full,
            label: Label::Class(label),
        }
    }

    #[test]
    fn alignment_is_by_clip_id() {
        let x = vec![row("a", vec![1.0, 0.0], 0), row("b", vec![0.0, 1.0], 1)];
        let mut s = x.clone();
        s.reverse();
        assert_eq!(align(&x, &s).unwrap().len(), 2);
        s[0].clip_id = "c".into();
        let err = align(&x, &s).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)), "{err}");
    }

    #[test]
    fn three_clip_top1() {
        // X3D right on a, b; SlowFast right on b, c
        let x = vec![
            row("a", vec![2.0, 0.0], 0),
            row("b", vec![0.0, 1.0], 1),
            row("c", vec![1.0, 0.0], 1),
        ];
        let s = vec![
            row("a", vec![0.0, 1.0], 0),
            row("b", vec![0.0, 3.0], 1),
            row("c", vec![0.0, 4.0], 1),
        ];
        let rows = sweep(Task::Ec, &x, &s, &EnsembleWeights::default_grid(), 0.5).unwrap();
        let top1: Vec<f64> = rows.iter().map(|r| r.report.columns()[0]).collect();
        // 75/25: a 1.5 vs 0.25 ok, b ok, c 0.75 vs 1.0 ok
        assert!((top1[0] - 100.0).abs() < 1e-9);
        // 25/75: a 0.5 vs 0.75 wrong
        assert!((top1[2] - 200.0 / 3.0).abs() < 1e-9);
    }
}
