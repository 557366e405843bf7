//! Shared helpers for the integration tests: brute-force metric oracles, a
//! minimal mp4 writer and result reporting.

#![allow(dead_code)]

use std::io::Write;

/// Print a verdict line straight to stderr (bypassing the harness capture)
/// and fail the test if anything went wrong.
pub fn verdict(criterion: u32, title: &str, failures: &[String]) {
    let line = if failures.is_empty() {
        format!("PASS criterion {criterion:2}: {title}")
    } else {
        format!(
            "FAIL criterion {criterion:2}: {title} ({} problems; first: {})",
            failures.len(),
            failures[0]
        )
    };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
    if !failures.is_empty() {
        let shown: Vec<&String> = failures.iter().take(10).collect();
        panic!("{line}\n{shown:#?}");
    }
}

/// Note printed under a verdict, e.g. measured values.
pub fn note(text: &str) {
    let _ = writeln!(std::io::stderr().lock(), "    {text}");
}

pub fn close(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-9
}

/// A container holding just `ftyp`, `moov/mvhd` (with the given duration)
/// and an empty `mdat`; enough for duration probing.
pub fn synthetic_mp4(duration_s: f64) -> Vec<u8> {
    let timescale: u32 = 600;
    let mut mvhd = vec![0u8; 4];
    mvhd.extend_from_slice(&0u32.to_be_bytes());
    mvhd.extend_from_slice(&0u32.to_be_bytes());
    mvhd.extend_from_slice(&timescale.to_be_bytes());
    mvhd.extend_from_slice(&((duration_s * timescale as f64).round() as u32).to_be_bytes());
    mvhd.extend_from_slice(&[0u8; 80]);
    let boxed = |kind: &[u8; 4], payload: &[u8]| {
        let mut b = ((payload.len() + 8) as u32).to_be_bytes().to_vec();
        b.extend_from_slice(kind);
        b.extend_from_slice(payload);
        b
    };
    let mut file = boxed(b"ftyp", b"isom\0\0\0\0isom");
    file.extend(boxed(b"moov", &boxed(b"mvhd", &mvhd)));
    file.extend(boxed(b"mdat", &[0u8; 8]));
    file
}

pub mod oracle {
    //! Straightforward reimplementations used as references.

    /// Classes sorted by descending score, lower index first on ties.
    pub fn ranking(row: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        idx
    }

    pub fn top_k(logits: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
        let hits = logits
            .iter()
            .zip(labels)
            .filter(|(row, l)| ranking(row)[..k].contains(l))
            .count();
        100.0 * hits as f64 / logits.len() as f64
    }

    /// Pair counting over all positive/negative pairs.
    pub fn auc_pairs(scores: &[f64], positive: &[bool]) -> Option<f64> {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if positive[i] && !positive[j] {
                    pairs += 1;
                    total += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        (pairs > 0).then(|| total / pairs as f64)
    }

    /// Macro AUC over columns that have both classes; `None` if none do.
    pub fn macro_auc(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Option<f64> {
        let n = scores[0].len();
        let per: Vec<f64> = (0..n)
            .filter_map(|c| {
                let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
                let l: Vec<bool> = labels.iter().map(|r| r[c]).collect();
                auc_pairs(&s, &l)
            })
            .collect();
        (!per.is_empty()).then(|| 100.0 * per.iter().sum::<f64>() / per.len() as f64)
    }

    fn ratio(a: usize, b: usize) -> f64 {
        if b == 0 {
            0.0
        } else {
            a as f64 / b as f64
        }
    }

    /// Macro precision, recall and F1 (per-class harmonic mean, then mean)
    /// from per-class predicted and true membership.
    pub fn macro_prf(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> (f64, f64, f64) {
        let n = truth[0].len();
        let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
        for c in 0..n {
            let tp = (0..truth.len()).filter(|&i| pred[i][c] && truth[i][c]).count();
            let pp = (0..truth.len()).filter(|&i| pred[i][c]).count();
            let ap = (0..truth.len()).filter(|&i| truth[i][c]).count();
            let pc = ratio(tp, pp);
            let rc = ratio(tp, ap);
            p += pc;
            r += rc;
            f += if pc + rc > 0.0 { 2.0 * pc * rc / (pc + rc) } else { 0.0 };
        }
        let n = n as f64;
        (100.0 * p / n, 100.0 * r / n, 100.0 * f / n)
    }

    pub fn one_hot(labels: &[usize], n: usize) -> Vec<Vec<bool>> {
        labels.iter().map(|&l| (0..n).map(|c| c == l).collect()).collect()
    }

    pub fn cell_accuracy(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> f64 {
        let cells: Vec<bool> = pred
            .iter()
            .flatten()
            .zip(truth.iter().flatten())
            .map(|(a, b)| a == b)
            .collect();
        100.0 * cells.iter().filter(|&&c| c).count() as f64 / cells.len() as f64
    }
}
