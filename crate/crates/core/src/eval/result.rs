use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mean;
use crate::error::{Error, Result};

/// Format tag stored in every result file.
pub const RESULT_FORMAT: &str = "lsat-result/1";

/// One update at period `t`, tested on the whole of period `t + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub period: usize,
    pub test_period: usize,
    pub auc: f64,
    pub auc_warm: Option<f64>,
    pub auc_cold: Option<f64>,
    pub n_warm: usize,
    pub n_cold: usize,
    /// Selected α or λ; present only for the two combined strategies.
    pub coefficient: Option<f64>,
    /// Validation AUC of the selected combination on period `t`.
    pub val_auc: Option<f64>,
    pub val_auc_short: Option<f64>,
    pub val_auc_long: Option<f64>,
    pub train_size: usize,
    pub long_train_size: Option<usize>,
    pub test_size: usize,
    pub loss_trace: Vec<f64>,
    pub adapter_digest: Option<String>,
    pub long_digest: Option<String>,
    pub base_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub first_test_period: usize,
    pub last_test_period: usize,
    pub periods: usize,
    pub mean_auc: Option<f64>,
}

impl Aggregate {
    /// Mean test AUC over records whose test period lies in `window`.
    pub fn over(records: &[PeriodRecord], window: RangeInclusive<usize>) -> Self {
        let aucs: Vec<f64> = records.iter().filter(|r| window.contains(&r.test_period)).map(|r| r.auc).collect();
        Self {
            first_test_period: *window.start(),
            last_test_period: *window.end(),
            periods: aucs.len(),
            mean_auc: mean(&aucs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub format: String,
    pub dataset: String,
    /// Comparison-table row label.
    pub strategy: String,
    pub seed: u64,
    pub fusion_mode: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub base_hash: String,
    pub records: Vec<PeriodRecord>,
    pub aggregate: Aggregate,
}

impl ExperimentResult {
    /// Pretty JSON with a trailing newline; stable byte-for-byte.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.format != RESULT_FORMAT {
            return Err(Error::Format { offset: 0, msg: format!("unsupported result format {:?}", r.format) });
        }
        Ok(r)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// SHA-256 (hex) of the compact JSON encoding; object keys are sorted, so
/// equal values hash equally.
pub fn json_digest(value: &serde_json::Value) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
