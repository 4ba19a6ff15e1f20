//! AUC with exact tie handling, warm/cold breakdowns, result files and
//! report emission.

mod report;
mod result;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{emit_report, render_comparison, render_raw, render_series, ReportFiles, STRATEGY_ROW_ORDER};
pub use result::{json_digest, Aggregate, ExperimentResult, PeriodRecord, RESULT_FORMAT};

/// Scores with binary labels and optional item rows for slicing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub items: Option<Vec<u32>>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        Self::build(scores, labels, None)
    }

    pub fn with_items(scores: Vec<f64>, labels: Vec<u8>, items: Vec<u32>) -> Result<Self> {
        Self::build(scores, labels, Some(items))
    }

    fn build(scores: Vec<f64>, labels: Vec<u8>, items: Option<Vec<u32>>) -> Result<Self> {
        if scores.len() != labels.len() || items.as_ref().is_some_and(|i| i.len() != scores.len()) {
            return Err(Error::Dimension {
                op: "scored set",
                left: (scores.len(), 1),
                right: (labels.len(), items.as_ref().map_or(1, Vec::len)),
            });
        }
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite { what: "score".into(), index });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Usage("labels must be 0 or 1".into()));
        }
        Ok(Self { scores, labels, items })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn auc(&self) -> Result<f64> {
        auc(&self.scores, &self.labels)
    }
}

fn class_counts(labels: &[u8]) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!("AUC needs both classes, got {pos} positive and {neg} negative")));
    }
    Ok((pos, neg))
}

/// Mann–Whitney AUC by average ranks, `O(n log n)`.
///
/// Computed as an integer count of doubled pair wins (2 per win, 1 per
/// tie) over `2·P·N`, so the result is a single correctly rounded division.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension { op: "auc", left: (scores.len(), 1), right: (labels.len(), 1) });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { what: "score".into(), index });
    }
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives; a tie group spanning 1-based ranks
    // lo..=hi gives each member rank (lo + hi) / 2.
    let mut rank_sum2: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let positives = order[start..=end].iter().filter(|&&i| labels[i] == 1).count() as u128;
        rank_sum2 += positives * (start as u128 + 1 + end as u128 + 1);
        start = end + 1;
    }
    let (p, n) = (pos as u128, neg as u128);
    let wins2 = rank_sum2 - p * (p + 1);
    Ok(wins2 as f64 / (2 * p * n) as f64)
}

/// Exhaustive pair counting, `O(n²)`.
pub fn auc_oracle(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension { op: "auc_oracle", left: (scores.len(), 1), right: (labels.len(), 1) });
    }
    let (pos, neg) = class_counts(labels)?;
    let mut wins2: u128 = 0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            if si > sj {
                wins2 += 2;
            } else if si == sj {
                wins2 += 1;
            }
        }
    }
    Ok(wins2 as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// AUC per slice; `None` marks a slice that is empty or single-class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub overall: Option<f64>,
    pub warm: Option<f64>,
    pub cold: Option<f64>,
    pub n_warm: usize,
    pub n_cold: usize,
}

fn defined_auc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    match auc(scores, labels) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Overall, warm and cold AUC of a scored set carrying item rows.
/// Items in neither set count only toward the overall figure.
pub fn evaluate_with_breakdown(set: &ScoredSet, warm: &BTreeSet<u32>, cold: &BTreeSet<u32>) -> Result<Breakdown> {
    let items = set.items.as_ref().ok_or_else(|| Error::Usage("warm/cold breakdown needs item rows".into()))?;
    let mut slices: [(Vec<f64>, Vec<u8>); 2] = Default::default();
    for ((&s, &l), item) in set.scores.iter().zip(&set.labels).zip(items) {
        let slot = if warm.contains(item) {
            0
        } else if cold.contains(item) {
            1
        } else {
            continue;
        };
        slices[slot].0.push(s);
        slices[slot].1.push(l);
    }
    let [(ws, wl), (cs, cl)] = slices;
    Ok(Breakdown {
        overall: defined_auc(&set.scores, &set.labels)?,
        warm: defined_auc(&ws, &wl)?,
        cold: defined_auc(&cs, &cl)?,
        n_warm: ws.len(),
        n_cold: cs.len(),
    })
}

/// Arithmetic mean in input order; `None` when empty.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}
