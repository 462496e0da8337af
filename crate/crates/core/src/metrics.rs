//! Confusion matrices, per-class precision/recall/F1 with support-weighted
//! averages, and deterministic text/csv report rendering.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when a zero denominator forced a metric to 0.0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// Support-weighted (precision, recall, f1).
    pub weighted_avg: (f64, f64, f64),
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportStyle {
    Text,
    Csv,
}

/// Tallies (truth, prediction) pairs into a K x K matrix.
pub fn confusion_matrix(truths: &[usize], preds: &[usize], k: usize) -> Result<Vec<Vec<u64>>> {
    if truths.len() != preds.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truths vs {} predictions",
            truths.len(),
            preds.len()
        )));
    }
    let mut matrix = vec![vec![0u64; k]; k];
    for (&t, &p) in truths.iter().zip(preds) {
        if t >= k {
            return Err(Error::InvalidLabel { label: t, classes: k });
        }
        if p >= k {
            return Err(Error::InvalidLabel { label: p, classes: k });
        }
        matrix[t][p] += 1;
    }
    Ok(matrix)
}

/// Per class c: TP = M[c][c], FP = column sum - TP, FN = row sum - TP;
/// precision = TP/(TP+FP), recall = TP/(TP+FN), F1 their harmonic mean.
/// Zero denominators report 0.0 with the degenerate flag set.
pub fn metrics_from_confusion(matrix: &[Vec<u64>]) -> Result<EvalReport> {
    let k = matrix.len();
    if k == 0 {
        return Err(Error::EmptyMatrix);
    }
    for row in matrix {
        if row.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "confusion matrix row of {} in a {k}-class matrix",
                row.len()
            )));
        }
    }
    let total: u64 = matrix.iter().map(|r| r.iter().sum::<u64>()).sum();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut per_class = Vec::with_capacity(k);
    let mut trace = 0u64;
    for c in 0..k {
        let tp = matrix[c][c];
        trace += tp;
        let row_sum: u64 = matrix[c].iter().sum();
        let col_sum: u64 = matrix.iter().map(|r| r[c]).sum();
        let fp = col_sum - tp;
        let fn_ = row_sum - tp;
        let mut degenerate = false;
        let precision = if tp + fp == 0 {
            degenerate = true;
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            degenerate = true;
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            degenerate = true;
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support: row_sum,
            degenerate,
        });
    }
    let accuracy = trace as f64 / total as f64;
    let weigh = |f: &dyn Fn(&ClassMetrics) -> f64| -> f64 {
        per_class
            .iter()
            .map(|m| m.support as f64 * f(m))
            .sum::<f64>()
            / total as f64
    };
    let weighted_avg = (
        weigh(&|m| m.precision),
        weigh(&|m| m.recall),
        weigh(&|m| m.f1),
    );
    Ok(EvalReport {
        confusion: matrix.to_vec(),
        per_class,
        accuracy,
        weighted_avg,
        total,
    })
}

/// Renders the per-class table with the weighted-average row last. Text
/// style prints percentages at two decimals; csv keeps full precision.
pub fn render_report(report: &EvalReport, class_names: &[String], style: ReportStyle) -> Result<Vec<u8>> {
    let k = report.per_class.len();
    if class_names.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{} class names for {k} classes",
            class_names.len()
        )));
    }
    let mut out = String::new();
    match style {
        ReportStyle::Text => {
            let name_width = class_names
                .iter()
                .map(|n| n.len())
                .chain(["weighted avg".len()])
                .max()
                .unwrap()
                .max(5);
            let _ = writeln!(
                out,
                "{:<name_width$}  {:>9}  {:>9}  {:>9}  {:>8}",
                "class", "prec", "rec", "f1", "support"
            );
            for (name, m) in class_names.iter().zip(&report.per_class) {
                let _ = writeln!(
                    out,
                    "{:<name_width$}  {:>8.2}%  {:>8.2}%  {:>8.2}%  {:>8}",
                    name,
                    m.precision * 100.0,
                    m.recall * 100.0,
                    m.f1 * 100.0,
                    m.support
                );
            }
            let (p, r, f1) = report.weighted_avg;
            let _ = writeln!(
                out,
                "{:<name_width$}  {:>8.2}%  {:>8.2}%  {:>8.2}%  {:>8}",
                "weighted avg",
                p * 100.0,
                r * 100.0,
                f1 * 100.0,
                report.total
            );
            let _ = writeln!(out, "accuracy: {:.2}%", report.accuracy * 100.0);
        }
        ReportStyle::Csv => {
            let _ = writeln!(out, "class,precision,recall,f1,support");
            for (name, m) in class_names.iter().zip(&report.per_class) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    name, m.precision, m.recall, m.f1, m.support
                );
            }
            let (p, r, f1) = report.weighted_avg;
            let _ = writeln!(out, "weighted_avg,{p},{r},{f1},{}", report.total);
        }
    }
    Ok(out.into_bytes())
}

/// Confusion matrix as csv with header-labeled rows.
pub fn render_confusion(report: &EvalReport, class_names: &[String]) -> Vec<u8> {
    let mut out = String::new();
    let _ = writeln!(out, "true\\pred,{}", class_names.join(","));
    for (name, row) in class_names.iter().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{},{}", name, cells.join(","));
    }
    out.into_bytes()
}
