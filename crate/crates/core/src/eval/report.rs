//! Comparison table, per-period series and a full-precision sidecar.
//!
//! * `comparison.csv`: `strategy,<dataset>...`; one row per strategy, each
//!   cell the seed-mean of the aggregate AUC.
//! * `series.csv`: `dataset,strategy,period,auc_overall,auc_warm,auc_cold,coefficient`;
//!   seed-means per update period.
//! * `raw.csv`: every record of every seed at full precision.
//!
//! AUC cells carry 4 decimals; absent values are written as `NA`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{mean, ExperimentResult};
use crate::error::{Error, Result};

/// Canonical row order; `(m)` matches any written-out horizon such as `(10)`.
/// Unknown labels follow alphabetically.
pub const STRATEGY_ROW_ORDER: [&str; 7] = [
    "Full Retraining",
    "Fine-tuning",
    "Short-term LoRA",
    "Long-term LoRA",
    "LSAT-TA (m)",
    "LSAT-EN (full)",
    "LSAT-EN (m)",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub comparison: PathBuf,
    pub series: PathBuf,
    pub raw: PathBuf,
}

fn horizon_generic(label: &str) -> String {
    match label.strip_suffix(')').and_then(|s| s.rsplit_once('(')) {
        Some((head, n)) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => format!("{head}(m)"),
        _ => label.to_string(),
    }
}

fn row_rank(label: &str) -> (usize, String) {
    let generic = horizon_generic(label);
    let pos = STRATEGY_ROW_ORDER.iter().position(|&l| l == generic).unwrap_or(STRATEGY_ROW_ORDER.len());
    (pos, label.to_string())
}

fn fixed4(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

fn full(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:?}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Mean over present values; `None` when nothing is present.
fn mean_present(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    mean(&present)
}

/// Table row order and label, then dataset.
type CellKey<'a> = ((usize, String), &'a str);

pub fn render_comparison(results: &[ExperimentResult]) -> String {
    let mut datasets: Vec<&str> = results.iter().map(|r| r.dataset.as_str()).collect();
    datasets.sort_unstable();
    datasets.dedup();
    let mut cells: BTreeMap<CellKey<'_>, Vec<Option<f64>>> = BTreeMap::new();
    for r in results {
        cells.entry((row_rank(&r.strategy), r.dataset.as_str())).or_default().push(r.aggregate.mean_auc);
    }
    let mut rows: Vec<(usize, String)> = cells.keys().map(|(row, _)| row.clone()).collect();
    rows.dedup();
    let mut out = String::from("strategy");
    for d in &datasets {
        let _ = write!(out, ",{}", csv_field(d));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&csv_field(&row.1));
        for d in &datasets {
            let cell = cells.get(&(row.clone(), d)).and_then(|v| mean_present(v));
            let _ = write!(out, ",{}", fixed4(cell));
        }
        out.push('\n');
    }
    out
}

type SeriesKey<'a> = (&'a str, (usize, String), usize);

#[derive(Default)]
struct SeriesPoint {
    overall: Vec<Option<f64>>,
    warm: Vec<Option<f64>>,
    cold: Vec<Option<f64>>,
    coefficient: Vec<Option<f64>>,
}

pub fn render_series(results: &[ExperimentResult]) -> String {
    let mut points: BTreeMap<SeriesKey, SeriesPoint> = BTreeMap::new();
    for r in results {
        for rec in &r.records {
            let p = points.entry((r.dataset.as_str(), row_rank(&r.strategy), rec.period)).or_default();
            p.overall.push(Some(rec.auc));
            p.warm.push(rec.auc_warm);
            p.cold.push(rec.auc_cold);
            p.coefficient.push(rec.coefficient);
        }
    }
    let mut out = String::from("dataset,strategy,period,auc_overall,auc_warm,auc_cold,coefficient\n");
    for ((dataset, (_, strategy), period), p) in &points {
        let coefficient = mean_present(&p.coefficient).map_or_else(|| "NA".to_string(), |c| format!("{c:.2}"));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(dataset),
            csv_field(strategy),
            period,
            fixed4(mean_present(&p.overall)),
            fixed4(mean_present(&p.warm)),
            fixed4(mean_present(&p.cold)),
            coefficient
        );
    }
    out
}

pub fn render_raw(results: &[ExperimentResult]) -> String {
    let mut out = String::from(
        "dataset,strategy,seed,period,test_period,auc_overall,auc_warm,auc_cold,coefficient,train_size,test_size\n",
    );
    for r in results {
        for rec in &r.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&r.dataset),
                csv_field(&r.strategy),
                r.seed,
                rec.period,
                rec.test_period,
                full(Some(rec.auc)),
                full(rec.auc_warm),
                full(rec.auc_cold),
                full(rec.coefficient),
                rec.train_size,
                rec.test_size
            );
        }
        let _ = writeln!(
            out,
            "{},{},{},aggregate,{}-{},{},NA,NA,NA,NA,{}",
            csv_field(&r.dataset),
            csv_field(&r.strategy),
            r.seed,
            r.aggregate.first_test_period,
            r.aggregate.last_test_period,
            full(r.aggregate.mean_auc),
            r.aggregate.periods
        );
    }
    out
}

/// Writes the three report files into `dir` (created if missing).
pub fn emit_report(results: &[ExperimentResult], dir: impl AsRef<Path>) -> Result<ReportFiles> {
    if results.is_empty() {
        return Err(Error::Usage("no results to report".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        comparison: dir.join("comparison.csv"),
        series: dir.join("series.csv"),
        raw: dir.join("raw.csv"),
    };
    for (path, text) in [
        (&files.comparison, render_comparison(results)),
        (&files.series, render_series(results)),
        (&files.raw, render_raw(results)),
    ] {
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(files)
}
