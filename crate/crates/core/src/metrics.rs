//! Evaluation metrics for both tasks. All reported values are percentages.
//!
//! Averaging is macro (unweighted mean over classes or labels). Multilabel
//! accuracy is per cell of the sample × label matrix. Classification
//! precision/recall/F1 use the argmax prediction; ties pick the lower class
//! index, the same rule `top_k_accuracy` uses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::Task;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskMetrics {
    Ec {
        top1: f64,
        top5: f64,
        auc: Option<f64>,
        precision: f64,
        recall: f64,
        f1: f64,
    },
    Mgap {
        accuracy: f64,
        auc: Option<f64>,
        precision: f64,
        recall: f64,
        f1: f64,
    },
}

/// How the numbers in a report were computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricNotes {
    pub averaging: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Top-k actually used for the "top5" column when fewer than 5 classes exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    /// Classes/labels left out of the AUC average (no positives or no negatives).
    #[serde(default)]
    pub auc_skipped: Vec<usize>,
    /// Classes/labels never predicted and never present; they count as 0 in P/R/F1.
    #[serde(default)]
    pub absent: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub n_samples: usize,
    #[serde(flatten)]
    pub values: TaskMetrics,
    pub notes: MetricNotes,
}

impl MetricsReport {
    pub fn f1(&self) -> f64 {
        match self.values {
            TaskMetrics::Ec { f1, .. } | TaskMetrics::Mgap { f1, .. } => f1,
        }
    }

    pub fn auc(&self) -> Option<f64> {
        match self.values {
            TaskMetrics::Ec { auc, .. } | TaskMetrics::Mgap { auc, .. } => auc,
        }
    }

    /// Values in table column order: EC `top1, top5, auc, prec, recall, f1`;
    /// MGAP `accuracy, auc, prec, recall, f1`. A missing AUC is NaN.
    pub fn columns(&self) -> Vec<f64> {
        let auc = |a: Option<f64>| a.unwrap_or(f64::NAN);
        match self.values {
            TaskMetrics::Ec {
                top1,
                top5,
                auc: a,
                precision,
                recall,
                f1,
            } => vec![top1, top5, auc(a), precision, recall, f1],
            TaskMetrics::Mgap {
                accuracy,
                auc: a,
                precision,
                recall,
                f1,
            } => vec![accuracy, auc(a), precision, recall, f1],
        }
    }
}

fn check_rows<T>(rows: &[Vec<T>], context: &str) -> Result<usize> {
    let first = rows
        .first()
        .ok_or_else(|| Error::UndefinedMetric(format!("{context}: empty sample set")))?;
    let n = first.len();
    if n == 0 {
        return Err(Error::InvalidInput(format!("{context}: zero-width rows")));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::shape(context, n, bad.len()));
    }
    Ok(n)
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::shape("labels", rows, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Position of class `c` in the descending ranking of `row`.
fn rank(row: &[f64], c: usize) -> usize {
    row.iter()
        .enumerate()
        .filter(|&(j, &v)| v > row[c] || (v == row[c] && j < c))
        .count()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Percentage of samples whose true class ranks among the `k` largest logits.
pub fn top_k_accuracy(logits: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    let n = check_rows(logits, "top-k accuracy")?;
    check_labels(labels, logits.len(), n)?;
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("k = {k} with {n} classes")));
    }
    let hits = logits
        .iter()
        .zip(labels)
        .filter(|(row, &label)| rank(row, label) < k)
        .count();
    Ok(100.0 * hits as f64 / logits.len() as f64)
}

/// Rank-based (Mann-Whitney) AUROC of one binary problem, ties counted half.
/// `None` when either class is missing.
pub fn auroc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // average 1-based rank of the tie block
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if positive[idx] {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroAuc {
    pub value: f64,
    pub skipped: Vec<usize>,
}

/// One-vs-rest AUROC per column, averaged over columns that have both
/// positives and negatives.
pub fn auroc_macro(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<MacroAuc> {
    let n = check_rows(scores, "auroc")?;
    if labels.len() != scores.len() {
        return Err(Error::shape("auroc labels", scores.len(), labels.len()));
    }
    check_rows(labels, "auroc labels")?;
    if labels[0].len() != n {
        return Err(Error::shape("auroc labels", n, labels[0].len()));
    }
    let mut sum = 0.0;
    let mut used = 0;
    let mut skipped = Vec::new();
    for c in 0..n {
        let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|r| r[c]).collect();
        match auroc_binary(&col, &pos) {
            Some(a) => {
                sum += a;
                used += 1;
            }
            None => skipped.push(c),
        }
    }
    if used == 0 {
        return Err(Error::UndefinedMetric(
            "no class has both positive and negative samples".into(),
        ));
    }
    if !skipped.is_empty() {
        log::warn!("AUC skipped degenerate columns {skipped:?}");
    }
    Ok(MacroAuc {
        value: 100.0 * sum / used as f64,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub absent: Vec<usize>,
}

/// Macro precision/recall/F1 from per-column `(tp, fp, fn)` counts.
fn macro_prf(counts: &[(usize, usize, usize)]) -> Prf {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut f_sum = 0.0;
    let mut absent = Vec::new();
    for (c, &(tp, fp, fn_)) in counts.iter().enumerate() {
        if tp + fp + fn_ == 0 {
            absent.push(c);
        }
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        p_sum += p;
        r_sum += r;
        f_sum += f;
    }
    let n = counts.len() as f64;
    Prf {
        precision: 100.0 * p_sum / n,
        recall: 100.0 * r_sum / n,
        f1: 100.0 * f_sum / n,
        absent,
    }
}

/// Macro precision/recall/F1 of argmax predictions over all classes.
pub fn multiclass_prf(logits: &[Vec<f64>], labels: &[usize]) -> Result<Prf> {
    let n = check_rows(logits, "precision/recall")?;
    check_labels(labels, logits.len(), n)?;
    let mut counts = vec![(0usize, 0usize, 0usize); n];
    for (row, &label) in logits.iter().zip(labels) {
        let pred = argmax(row);
        if pred == label {
            counts[label].0 += 1;
        } else {
            counts[pred].1 += 1;
            counts[label].2 += 1;
        }
    }
    Ok(macro_prf(&counts))
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Full EC report from pre-softmax logits. The "top5" column uses
/// `k = min(5, classes)`.
pub fn multiclass_report(logits: &[Vec<f64>], labels: &[usize]) -> Result<MetricsReport> {
    let n = check_rows(logits, "classification report")?;
    let k = n.min(5);
    let top1 = top_k_accuracy(logits, labels, 1)?;
    let top5 = top_k_accuracy(logits, labels, k)?;
    let probs: Vec<Vec<f64>> = logits.iter().map(|r| softmax(r)).collect();
    let onehot: Vec<Vec<bool>> = labels
        .iter()
        .map(|&l| (0..n).map(|c| c == l).collect())
        .collect();
    let (auc, skipped) = match auroc_macro(&probs, &onehot) {
        Ok(a) => (Some(a.value), a.skipped),
        Err(Error::UndefinedMetric(_)) => (None, (0..n).collect()),
        Err(e) => return Err(e),
    };
    let prf = multiclass_prf(logits, labels)?;
    Ok(MetricsReport {
        task: Task::Ec,
        n_samples: logits.len(),
        values: TaskMetrics::Ec {
            top1,
            top5,
            auc,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
        },
        notes: MetricNotes {
            averaging: "macro".into(),
            accuracy: None,
            threshold: None,
            top_k: (k != 5).then_some(k),
            auc_skipped: skipped,
            absent: prf.absent,
        },
    })
}

/// MGAP report from per-label probabilities.
pub fn multilabel_metrics(
    probabilities: &[Vec<f64>],
    labels: &[Vec<bool>],
    threshold: f64,
) -> Result<MetricsReport> {
    let n = check_rows(probabilities, "multilabel metrics")?;
    if labels.len() != probabilities.len() {
        return Err(Error::shape("multilabel labels", probabilities.len(), labels.len()));
    }
    if let Some(bad) = labels.iter().find(|r| r.len() != n) {
        return Err(Error::shape("multilabel labels", n, bad.len()));
    }
    if probabilities.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("probabilities must lie in [0, 1]".into()));
    }
    let mut correct = 0usize;
    let mut counts = vec![(0usize, 0usize, 0usize); n];
    for (row, truth) in probabilities.iter().zip(labels) {
        for c in 0..n {
            let pred = row[c] >= threshold;
            if pred == truth[c] {
                correct += 1;
            }
            match (pred, truth[c]) {
                (true, true) => counts[c].0 += 1,
                (true, false) => counts[c].1 += 1,
                (false, true) => counts[c].2 += 1,
                (false, false) => {}
            }
        }
    }
    let (auc, skipped) = match auroc_macro(probabilities, labels) {
        Ok(a) => (Some(a.value), a.skipped),
        Err(Error::UndefinedMetric(_)) => (None, (0..n).collect()),
        Err(e) => return Err(e),
    };
    let prf = macro_prf(&counts);
    Ok(MetricsReport {
        task: Task::Mgap,
        n_samples: probabilities.len(),
        values: TaskMetrics::Mgap {
            accuracy: 100.0 * correct as f64 / (probabilities.len() * n) as f64,
            auc,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
        },
        notes: MetricNotes {
            averaging: "macro".into(),
            accuracy: Some("per-cell".into()),
            threshold: Some(threshold),
            top_k: None,
            auc_skipped: skipped,
            absent: prf.absent,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_top_k() {
        // sample 3 misses at top-1 but is second
        let logits = vec![
            vec![3.0, 1.0, 0.0],
            vec![0.0, 2.0, 1.0],
            vec![0.0, 1.0, 5.0],
            vec![2.0, 1.0, 0.0],
        ];
        let labels = [0, 1, 2, 1];
        assert_eq!(top_k_accuracy(&logits, &labels, 1).unwrap(), 75.0);
        assert_eq!(top_k_accuracy(&logits, &labels, 2).unwrap(), 100.0);
        assert_eq!(top_k_accuracy(&logits, &labels, 3).unwrap(), 100.0);
        assert!(top_k_accuracy(&logits, &labels, 4).is_err());
        assert!(matches!(top_k_accuracy(&[], &[], 1), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn ties_break_by_index() {
        let logits = vec![vec![1.0, 1.0]];
        assert_eq!(top_k_accuracy(&logits, &[0], 1).unwrap(), 100.0);
        assert_eq!(top_k_accuracy(&logits, &[1], 1).unwrap(), 0.0);
    }

    #[test]
    fn auc_hand_case() {
        let scores = [0.9, 0.4, 0.6, 0.1];
        let pos = [true, true, false, false];
        assert_eq!(auroc_binary(&scores, &pos), Some(0.75));
        assert_eq!(auroc_binary(&[0.3; 4], &pos), Some(0.5));
        assert_eq!(auroc_binary(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn auc_macro_skips_degenerate() {
        let scores = vec![vec![0.9, 0.5], vec![0.1, 0.5]];
        let labels = vec![vec![true, true], vec![false, true]];
        let auc = auroc_macro(&scores, &labels).unwrap();
        assert_eq!(auc.value, 100.0);
        assert_eq!(auc.skipped, vec![1]);
        let all_pos = vec![vec![true, true], vec![true, true]];
        assert!(matches!(auroc_macro(&scores, &all_pos), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn one_class_predictions_on_balanced_set() {
        let logits = vec![vec![1.0, 0.0]; 4];
        let prf = multiclass_prf(&logits, &[0, 0, 1, 1]).unwrap();
        assert_eq!(prf.recall, 50.0);
        assert_eq!(prf.precision, 25.0);
    }

    #[test]
    fn all_zero_multilabel_predictions() {
        // 5 samples x 2 labels, 2 of 10 cells positive
        let probs = vec![vec![0.0, 0.0]; 5];
        let mut labels = vec![vec![false, false]; 5];
        labels[0][0] = true;
        labels[1][1] = true;
        let rep = multilabel_metrics(&probs, &labels, DEFAULT_THRESHOLD).unwrap();
        match rep.values {
            TaskMetrics::Mgap { accuracy, recall, .. } => {
                assert!((accuracy - 80.0).abs() < 1e-12);
                assert_eq!(recall, 0.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn report_json_round_trip() {
        let logits = vec![vec![2.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 2.0]];
        let rep = multiclass_report(&logits, &[0, 1, 2]).unwrap();
        assert_eq!(rep.notes.top_k, Some(3));
        let json = serde_json::to_string(&rep).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }
}
