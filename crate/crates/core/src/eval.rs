//! Threshold-free (ROC/AUC) and thresholded (Youden-calibrated) metrics,
//! plus the sweep and model-comparison report shapes.
//!
//! Candidate thresholds are the observed score values and classification is
//! `score >= threshold`; both choices are pinned so the brute-force oracles
//! in the tests match exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{fmt_g6, ReportFormat, Table};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Score threshold producing this point (+inf for the origin).
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub f1: f64,
    pub auc: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub specificity: f64,
    pub threshold_used: f64,
    /// Positive labels among the evaluated rows.
    pub n_outcomes: usize,
    pub n_individuals: usize,
}

fn validate_scores(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Format(format!(
            "scores ({}) and labels ({}) differ in length",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Format("scores must be finite".to_string()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((n_pos, n_neg))
}

/// ROC curve (ties grouped into single steps) and trapezoidal AUC.
pub fn roc_and_auc(scores: &[f64], labels: &[u8]) -> Result<(RocCurve, f64)> {
    let (n_pos, n_neg) = validate_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut auc = 0.0;
    let mut idx = 0;
    while idx < order.len() {
        let threshold = scores[order[idx]];
        // Consume the whole tie group at this score.
        while idx < order.len() && scores[order[idx]] == threshold {
            if labels[order[idx]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        let prev = *points.last().expect("non-empty");
        let point = RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        };
        auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) / 2.0;
        points.push(point);
    }
    Ok((RocCurve { points }, auc))
}

/// Youden-optimal threshold over observed score values: maximizes
/// J(τ) = TPR(τ) − FPR(τ) under the rule `score >= τ`; ties resolve to the
/// smallest τ. Returns (τ*, J(τ*)).
pub fn youden_threshold(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    let (curve, _) = roc_and_auc(scores, labels)?;
    // Skip the +inf origin: candidates are observed values only. Iterating
    // in descending-score order and replacing on >= keeps the smallest τ
    // among maxima.
    let mut best: Option<(f64, f64)> = None;
    for point in &curve.points[1..] {
        let j = point.tpr - point.fpr;
        if best.is_none_or(|(_, best_j)| j >= best_j) {
            best = Some((point.threshold, j));
        }
    }
    Ok(best.expect("at least one observed score"))
}

/// Confusion-matrix metrics (plus AUC) at the rule `score >= threshold`.
pub fn metrics_at(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsRow> {
    let (n_pos, n_neg) = validate_scores(scores, labels)?;
    let (_, auc) = roc_and_auc(scores, labels)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    for (score, &label) in scores.iter().zip(labels) {
        match (*score >= threshold, label) {
            (true, 1) => tp += 1,
            (true, _) => fp += 1,
            (false, 1) => {}
            (false, _) => tn += 1,
        }
    }
    let sensitivity = tp as f64 / n_pos as f64;
    let specificity = tn as f64 / n_neg as f64;
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let f1 = if precision + sensitivity > 0.0 {
        2.0 * precision * sensitivity / (precision + sensitivity)
    } else {
        0.0
    };
    Ok(MetricsRow {
        f1,
        auc,
        sensitivity,
        precision,
        specificity,
        threshold_used: threshold,
        n_outcomes: n_pos,
        n_individuals: scores.len(),
    })
}

// ---------------------------------------------------------------------------
// report shapes
// ---------------------------------------------------------------------------

/// One minimum-history sweep row: cohort-level counts plus the test-set
/// metrics of the experiment run at that threshold (or the error that
/// stopped it).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub threshold: i64,
    /// Members of the flexible cohort at this threshold.
    pub n_individuals: usize,
    /// Positive members of that cohort.
    pub n_outcomes: usize,
    pub metrics: std::result::Result<MetricsRow, String>,
}

/// Sweep table: rows sorted by AUC descending then F1 descending (fully
/// equal rows keep input order); rows whose experiment failed sink to the
/// bottom, ordered by threshold.
pub fn sweep_report(entries: &[SweepEntry], format: ReportFormat) -> String {
    let mut ok: Vec<&SweepEntry> = entries.iter().filter(|e| e.metrics.is_ok()).collect();
    let mut failed: Vec<&SweepEntry> = entries.iter().filter(|e| e.metrics.is_err()).collect();
    ok.sort_by(|a, b| {
        let ma = a.metrics.as_ref().expect("filtered");
        let mb = b.metrics.as_ref().expect("filtered");
        mb.auc
            .partial_cmp(&ma.auc)
            .expect("finite auc")
            .then(mb.f1.partial_cmp(&ma.f1).expect("finite f1"))
    });
    failed.sort_by_key(|e| e.threshold);

    let mut table = Table::new(&[
        "f1",
        "auc",
        "sensitivity",
        "precision",
        "mrlt",
        "n_outcomes",
        "n_individuals",
        "error",
    ]);
    for entry in ok.into_iter().chain(failed) {
        match &entry.metrics {
            Ok(m) => table.push_row(vec![
                fmt_g6(m.f1),
                fmt_g6(m.auc),
                fmt_g6(m.sensitivity),
                fmt_g6(m.precision),
                entry.threshold.to_string(),
                entry.n_outcomes.to_string(),
                entry.n_individuals.to_string(),
                String::new(),
            ]),
            Err(e) => table.push_row(vec![
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                entry.threshold.to_string(),
                entry.n_outcomes.to_string(),
                entry.n_individuals.to_string(),
                e.replace(',', ";"),
            ]),
        }
    }
    table.render(format)
}

/// One model-comparison row, keyed by preset name.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonEntry {
    pub model: String,
    pub metrics: std::result::Result<MetricsRow, String>,
}

/// Comparison table, one row per preset in declaration order.
pub fn comparison_report(entries: &[ComparisonEntry], format: ReportFormat) -> String {
    let mut table = Table::new(&[
        "model",
        "sensitivity",
        "auc",
        "precision",
        "f1",
        "specificity",
        "threshold",
        "n_outcomes",
        "n_individuals",
        "error",
    ]);
    for entry in entries {
        match &entry.metrics {
            Ok(m) => table.push_row(vec![
                entry.model.clone(),
                fmt_g6(m.sensitivity),
                fmt_g6(m.auc),
                fmt_g6(m.precision),
                fmt_g6(m.f1),
                fmt_g6(m.specificity),
                fmt_g6(m.threshold_used),
                m.n_outcomes.to_string(),
                m.n_individuals.to_string(),
                String::new(),
            ]),
            Err(e) => {
                let mut row = vec![entry.model.clone()];
                row.extend(std::iter::repeat_n(String::new(), 8));
                row.push(e.replace(',', ";"));
                table.push_row(row);
            }
        }
    }
    table.render(format)
}
