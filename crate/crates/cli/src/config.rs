//! Run configuration: TOML file, then command-line overrides.
//!
//! ```toml
//! out = "runs/ml-1m"
//! seeds = [0, 1, 2]
//! strategies = ["full_retrain", "fine_tune", "lsat_en"]
//!
//! [data]
//! source = "raw"              # or "synthetic"
//! path = "ml-1m/ratings.dat"
//! min_user_interactions = 10
//! filter_order = "users_first" # or "window_first"
//! periods = { size = 10000 }  # or { count = 20 }, { calendar = 604800 }
//!
//! [synthetic]                 # used when source = "synthetic"
//! drift_amplitude = 1.0
//!
//! [pretrain.model]
//! d_emb = 64
//!
//! [strategy]
//! m = 10
//! rank = 8
//! fusion_mode = "delta_exact"
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use lsat_core::adapter::FusionMode;
use lsat_core::model::PretrainConfig;
use lsat_core::strategy::{StrategyConfig, StrategySpec};
use lsat_core::stream::{PeriodSpec, RawFormat, SynthConfig, DEFAULT_HISTORY_LEN, MIN_PERIOD_SIZE};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUT_ENV: &str = "LSAT_OUT";
const DEFAULT_OUT: &str = "lsat-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Synthetic,
    Raw,
}

/// Order of the user-activity filter and the time-window cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOrder {
    /// Activity counts the whole log.
    #[default]
    UsersFirst,
    /// Activity counts only events inside the window.
    WindowFirst,
}

/// Where the interaction log comes from and how it is cut into periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: Source,
    /// Dataset label in reports; defaults to `synthetic` or the file stem.
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    pub format: RawFormat,
    pub min_user_interactions: usize,
    pub filter_order: FilterOrder,
    pub start: Option<i64>,
    pub end: Option<i64>,
    /// Raw source only; synthetic streams take `synthetic.period_size`.
    pub periods: PeriodSpec,
    pub history_len: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: Source::default(),
            name: None,
            path: None,
            format: RawFormat::default(),
            min_user_interactions: 10,
            filter_order: FilterOrder::default(),
            start: None,
            end: None,
            periods: PeriodSpec::Size(10_000),
            history_len: DEFAULT_HISTORY_LEN,
        }
    }
}

impl DataConfig {
    pub fn dataset_name(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match (self.source, &self.path) {
            (Source::Raw, Some(p)) => p.file_stem().map_or("raw".into(), |s| s.to_string_lossy().into_owned()),
            (Source::Raw, None) => "raw".into(),
            (Source::Synthetic, _) => "synthetic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub strategies: Vec<String>,
    pub data: DataConfig,
    pub synthetic: SynthConfig,
    pub pretrain: PretrainConfig,
    pub strategy: StrategyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: None,
            seeds: vec![0],
            strategies: StrategySpec::table_rows().iter().map(|s| s.name().to_string()).collect(),
            data: DataConfig::default(),
            synthetic: SynthConfig::default(),
            pretrain: PretrainConfig::default(),
            strategy: StrategyConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub m: Option<usize>,
    pub dataset: Option<PathBuf>,
    pub synthetic: bool,
    pub period_size: Option<usize>,
    pub drift_amplitude: Option<f64>,
    pub strategies: Option<Vec<String>>,
    pub rank: Option<usize>,
    pub fusion_mode: Option<String>,
    pub grid: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(vec![format!("config: {e}")]))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    /// Applies `o`, collecting unparsable values instead of stopping at the first.
    pub fn apply(&mut self, o: &Overrides) -> Vec<String> {
        let mut bad = Vec::new();
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(m) = o.m {
            self.strategy.m = m;
        }
        if let Some(path) = &o.dataset {
            self.data.source = Source::Raw;
            self.data.path = Some(path.clone());
        }
        if o.synthetic {
            self.data.source = Source::Synthetic;
        }
        if let Some(size) = o.period_size {
            self.data.periods = PeriodSpec::Size(size);
            self.synthetic.period_size = size;
        }
        if let Some(a) = o.drift_amplitude {
            self.synthetic.drift_amplitude = a;
        }
        if let Some(list) = &o.strategies {
            self.strategies = list.clone();
        }
        if let Some(r) = o.rank {
            self.strategy.rank = r;
        }
        if let Some(mode) = &o.fusion_mode {
            match mode.parse::<FusionMode>() {
                Ok(m) => self.strategy.fusion_mode = m,
                Err(e) => bad.push(e.to_string()),
            }
        }
        if let Some(grid) = &o.grid {
            self.strategy.grid = grid.clone();
        }
        bad
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn strategy_specs(&self) -> Result<Vec<StrategySpec>, String> {
        self.strategies.iter().map(|s| s.parse::<StrategySpec>().map_err(|e| e.to_string())).collect()
    }

    /// Every violated constraint, in section order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.seeds.is_empty() {
            v.push("seeds must not be empty".into());
        }
        if self.strategies.is_empty() {
            v.push("strategies must not be empty".into());
        }
        for name in &self.strategies {
            if name.parse::<StrategySpec>().is_err() {
                v.push(format!("unknown strategy {name:?} (expected one of {})", StrategySpec::NAMES.join(", ")));
            }
        }
        let d = &self.data;
        match d.source {
            Source::Raw => {
                if d.path.is_none() {
                    v.push("data.path is required for a raw source".into());
                }
                let too_small = match d.periods {
                    PeriodSpec::Size(n) => n < MIN_PERIOD_SIZE,
                    PeriodSpec::Count(n) => n == 0,
                    PeriodSpec::Calendar(s) => s <= 0,
                };
                if too_small {
                    v.push(format!(
                        "data.periods {:?} is degenerate (sizes must be at least {MIN_PERIOD_SIZE})",
                        d.periods
                    ));
                }
                if d.format.delimiter.is_empty() {
                    v.push("data.format.delimiter must not be empty".into());
                }
                if let (Some(a), Some(b)) = (d.start, d.end) {
                    if a >= b {
                        v.push(format!("data.start {a} must precede data.end {b}"));
                    }
                }
            }
            Source::Synthetic => v.extend(self.synthetic.violations()),
        }
        if d.history_len == 0 {
            v.push("data.history_len must be at least 1".into());
        }
        let p = &self.pretrain;
        if p.model.d_emb == 0 || p.model.hidden == 0 {
            v.push("pretrain.model sizes must be positive".into());
        }
        if p.train.batch_size == 0 {
            v.push("pretrain.train.batch_size must be positive".into());
        }
        if !(p.train.lr > 0.0 && p.train.lr.is_finite()) {
            v.push(format!("pretrain.train.lr {} must be positive", p.train.lr));
        }
        v.extend(self.strategy.violations(None).into_iter().map(|s| format!("strategy: {s}")));
        v
    }

    /// The settings that determine the prepared dataset, echoed into it.
    pub fn data_echo(&self) -> serde_json::Value {
        match self.data.source {
            Source::Synthetic => {
                serde_json::json!({ "source": "synthetic", "name": self.data.dataset_name(), "synthetic": self.synthetic })
            }
            Source::Raw => {
                let mut data = self.data.clone();
                data.path = None;
                serde_json::json!({ "source": "raw", "name": self.data.dataset_name(), "data": data })
            }
        }
    }
}
