//! Logit dumps: one JSON object per line with the clip id, task, raw logits
//! and ground truth.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::task::Task;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(usize),
    Multi(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRow {
    pub clip_id: String,
    pub task: Task,
    /// Pre-activation outputs.
    pub logits: Vec<f64>,
    pub label: Label,
}

pub fn write_jsonl(path: &Path, rows: &[LogitRow]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<LogitRow>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::InvalidInput(format!("cannot open logit dump {}: {e}", path.display()))
    })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: LogitRow = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidInput(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Check that every row belongs to `task`, has the task's width and a label of
/// the matching kind, and that clip ids are unique.
pub fn validate_rows(rows: &[LogitRow], task: Task) -> Result<()> {
    let n = task.num_outputs();
    let mut seen = HashSet::new();
    for r in rows {
        if r.task != task {
            return Err(Error::InvalidInput(format!(
                "clip {} is a {} row in a {task} dump",
                r.clip_id, r.task
            )));
        }
        if r.logits.len() != n {
            return Err(Error::shape(format!("logits of clip {}", r.clip_id), n, r.logits.len()));
        }
        let ok = match (&r.label, task) {
            (Label::Class(c), Task::Ec) => *c < n,
            (Label::Multi(v), Task::Mgap) => v.len() == n,
            _ => false,
        };
        if !ok {
            return Err(Error::InvalidInput(format!("bad {task} label for clip {}", r.clip_id)));
        }
        if !seen.insert(r.clip_id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate clip id {}", r.clip_id)));
        }
    }
    Ok(())
}

/// Metrics for a set of rows: softmax for EC, sigmoid at `threshold` for MGAP.
pub fn report(task: Task, rows: &[LogitRow], threshold: f64) -> Result<MetricsReport> {
    validate_rows(rows, task)?;
    let logits: Vec<Vec<f64>> = rows.iter().map(|r| r.logits.clone()).collect();
    match task {
        Task::Ec => {
            let labels: Vec<usize> = rows
                .iter()
                .map(|r| match r.label {
                    Label::Class(c) => c,
                    Label::Multi(_) => unreachable!("validated"),
                })
                .collect();
            metrics::multiclass_report(&logits, &labels)
        }
        Task::Mgap => {
            let probs: Vec<Vec<f64>> = logits
                .iter()
                .map(|r| r.iter().map(|&v| metrics::sigmoid(v)).collect())
                .collect();
            let labels: Vec<Vec<bool>> = rows
                .iter()
                .map(|r| match &r.label {
                    Label::Multi(v) => v.clone(),
                    Label::Class(_) => unreachable!("validated"),
                })
                .collect();
            metrics::multilabel_metrics(&probs, &labels, threshold)
        }
    }
}
