//! Result tables as markdown or CSV, with percentages to two decimals and the
//! column order used for the classification, multilabel and channel-ratio
//! tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::task::Task;

/// A report with the row label it appears under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub name: String,
    #[serde(flatten)]
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Ec,
    Mgap,
    /// Classification metrics keyed by inverse β.
    Beta,
}

impl TableKind {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Ec => TableKind::Ec,
            Task::Mgap => TableKind::Mgap,
        }
    }

    pub fn task(self) -> Task {
        match self {
            TableKind::Ec | TableKind::Beta => Task::Ec,
            TableKind::Mgap => Task::Mgap,
        }
    }

    pub fn header(self) -> Vec<&'static str> {
        let first = match self {
            TableKind::Beta => "Inverse Beta",
            _ => "Model",
        };
        let mut h = vec![first];
        match self.task() {
            Task::Ec => h.extend(["Top 1 (%)", "Top 5 (%)", "AUC (%)", "Prec (%)", "Recall (%)", "F1 (%)"]),
            Task::Mgap => h.extend(["Accuracy (%)", "AUC (%)", "Prec (%)", "Recall (%)", "F1 (%)"]),
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub kind: TableKind,
    pub rows: Vec<TableRow>,
}

const MODEL_ORDER: [&str; 4] = ["x3d-s", "x3d-m", "slowfast-r50", "slowfast-r101"];
const ENSEMBLE_ORDER: [&str; 3] = ["75/25", "50/50", "25/75"];

/// Sort key: single models by architecture (with the not-pretrained and
/// fine-tuned variants grouped next to them), then other rows, then the
/// ensembles by decreasing X3D weight.
fn row_rank(kind: TableKind, name: &str) -> (usize, usize, f64) {
    if kind == TableKind::Beta {
        return (0, 0, name.trim().parse::<f64>().unwrap_or(f64::INFINITY));
    }
    let n = name.trim().to_ascii_lowercase();
    if let Some(i) = ENSEMBLE_ORDER.iter().position(|e| *e == n) {
        return (3, i, 0.0);
    }
    if let Some((x, _)) = n.split_once('/') {
        if let Ok(x) = x.trim().parse::<f64>() {
            return (3, 0, -x);
        }
    }
    let not_pretrained = n.contains("w/o pt");
    let fine_tuned = n.starts_with("ft ");
    let base = n.trim_start_matches("ft ").trim_end_matches("w/o pt").trim();
    match MODEL_ORDER.iter().position(|m| *m == base) {
        Some(i) => {
            let group = if not_pretrained { 0 } else { 1 };
            let variant = if fine_tuned { 1 } else { 0 };
            (group, 2 * i + variant, 0.0)
        }
        None => (2, 0, 0.0),
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{v:.2}")
    }
}

fn parse_value(s: &str) -> Result<f64> {
    let s = s.trim();
    if s == "n/a" {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::InvalidInput(format!("bad table value `{s}`")))
}

impl Table {
    /// Rows in canonical order; ties keep input order.
    pub fn new(kind: TableKind, reports: &[NamedReport]) -> Result<Self> {
        let task = kind.task();
        if let Some(r) = reports.iter().find(|r| r.report.task != task) {
            return Err(Error::InvalidInput(format!(
                "row `{}` is a {} report in a {task} table",
                r.name, r.report.task
            )));
        }
        let mut rows: Vec<TableRow> = reports
            .iter()
            .map(|r| TableRow {
                name: r.name.clone(),
                values: r.report.columns(),
            })
            .collect();
        rows.sort_by(|a, b| {
            row_rank(kind, &a.name)
                .partial_cmp(&row_rank(kind, &b.name))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(Self { kind, rows })
    }

    pub fn to_markdown(&self) -> String {
        let header = self.kind.header();
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let align: Vec<&str> = header
            .iter()
            .enumerate()
            .map(|(i, _)| if i == 0 { ":---" } else { "---:" })
            .collect();
        let _ = writeln!(out, "| {} |", align.join(" | "));
        for r in &self.rows {
            let cells: Vec<String> = std::iter::once(r.name.clone())
                .chain(r.values.iter().map(|&v| fmt_value(v)))
                .collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.kind.header())?;
        for r in &self.rows {
            let mut rec = vec![r.name.clone()];
            rec.extend(r.values.iter().map(|&v| fmt_value(v)));
            w.write_record(&rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(kind: TableKind, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != kind.header() {
            return Err(Error::InvalidInput(format!("unexpected table header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let values = rec.iter().skip(1).map(parse_value).collect::<Result<Vec<_>>>()?;
            rows.push(TableRow {
                name: rec[0].to_string(),
                values,
            });
        }
        Ok(Self { kind, rows })
    }

    pub fn from_markdown(kind: TableKind, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| l.trim_start().starts_with('|'));
        let cells = |l: &str| -> Vec<String> {
            l.trim()
                .trim_matches('|')
                .split('|')
                .map(|c| c.trim().to_string())
                .collect()
        };
        let header = cells(lines.next().unwrap_or_default());
        if header != kind.header() {
            return Err(Error::InvalidInput(format!("unexpected table header {header:?}")));
        }
        let mut rows = Vec::new();
        for line in lines.skip(1) {
            let c = cells(line);
            rows.push(TableRow {
                name: c[0].clone(),
                values: c[1..].iter().map(|v| parse_value(v)).collect::<Result<_>>()?,
            });
        }
        Ok(Self { kind, rows })
    }
}
