//! Incremental-update strategies and the period-by-period schedule.
//!
//! Adapter randomness is keyed by the training window `[first, last]`
//! (sub-streams `init` and `shuffle` of `adapter/first/last`), so two
//! strategies that train fresh adapters on the same window produce
//! bit-identical adapters. Full retraining at `t` and a long-term adapter
//! refreshed at `t` are the same computation, as are full retraining and
//! short-term training at `t = 1`.

mod combine;
mod schedule;

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterSet, FusionMode};
use crate::error::{Error, Result};
use crate::math::SeededRng;
use crate::model::{init_adapter_set, train_adapter, BaseParams, TrainConfig};
use crate::stream::PeriodizedStream;

pub use combine::{
    combined_scores, fused_adapters, predict_lsat_ensemble, predict_lsat_fused, select_coefficient, validate_grid,
    Combination, GridPoint, Selection,
};
pub use schedule::{
    pretrain_for_stream, result_config, run_fine_tune, run_full_retrain, run_long_term, run_lsat_period, run_schedule,
    run_short_term, LongTermStore, PeriodArtifacts, PeriodTiming, RunContext, ScheduleOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    FullRetrain,
    FineTune,
    ShortTermOnly,
    LongTermOnly,
    LsatEnsemble,
    LsatTaskArith,
}

impl StrategyKind {
    /// Whether the strategy selects α or λ on validation data.
    pub fn has_coefficient(self) -> bool {
        matches!(self, StrategyKind::LsatEnsemble | StrategyKind::LsatTaskArith)
    }

    pub fn uses_long_term(self) -> bool {
        matches!(self, StrategyKind::LongTermOnly | StrategyKind::LsatEnsemble | StrategyKind::LsatTaskArith)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongTermMode {
    /// Trained once on `D₁…D_m`, then reused unchanged.
    #[default]
    FixedAfterM,
    /// Retrained on `D₁…D_t` every period.
    RetrainEveryPeriod,
}

/// A strategy row: kind plus long-term mode (normalized to the default for
/// kinds without a long-term adapter).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub long_term_mode: LongTermMode,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind, long_term_mode: LongTermMode) -> Self {
        let long_term_mode = if kind.uses_long_term() { long_term_mode } else { LongTermMode::FixedAfterM };
        Self { kind, long_term_mode }
    }

    pub fn simple(kind: StrategyKind) -> Self {
        Self::new(kind, LongTermMode::FixedAfterM)
    }

    /// The seven comparison-table rows, in table order.
    pub fn table_rows() -> [StrategySpec; 7] {
        use LongTermMode::*;
        use StrategyKind::*;
        [
            Self::simple(FullRetrain),
            Self::simple(FineTune),
            Self::simple(ShortTermOnly),
            Self::simple(LongTermOnly),
            Self::new(LsatTaskArith, FixedAfterM),
            Self::new(LsatEnsemble, RetrainEveryPeriod),
            Self::new(LsatEnsemble, FixedAfterM),
        ]
    }

    /// Comparison-table row label.
    pub fn label(&self) -> &'static str {
        use LongTermMode::*;
        use StrategyKind::*;
        match (self.kind, self.long_term_mode) {
            (FullRetrain, _) => "Full Retraining",
            (FineTune, _) => "Fine-tuning",
            (ShortTermOnly, _) => "Short-term LoRA",
            (LongTermOnly, FixedAfterM) => "Long-term LoRA",
            (LongTermOnly, RetrainEveryPeriod) => "Long-term LoRA (full)",
            (LsatTaskArith, FixedAfterM) => "LSAT-TA (m)",
            (LsatTaskArith, RetrainEveryPeriod) => "LSAT-TA (full)",
            (LsatEnsemble, FixedAfterM) => "LSAT-EN (m)",
            (LsatEnsemble, RetrainEveryPeriod) => "LSAT-EN (full)",
        }
    }

    /// [`Self::label`] with the horizon written out, e.g. `LSAT-EN (10)`.
    pub fn row_label(&self, m: usize) -> String {
        self.label().replace("(m)", &format!("({m})"))
    }

    /// Command-line name; parsed back by `FromStr`.
    pub fn name(&self) -> &'static str {
        use LongTermMode::*;
        use StrategyKind::*;
        match (self.kind, self.long_term_mode) {
            (FullRetrain, _) => "full_retrain",
            (FineTune, _) => "fine_tune",
            (ShortTermOnly, _) => "short_term",
            (LongTermOnly, FixedAfterM) => "long_term",
            (LongTermOnly, RetrainEveryPeriod) => "long_term_full",
            (LsatTaskArith, FixedAfterM) => "lsat_ta",
            (LsatTaskArith, RetrainEveryPeriod) => "lsat_ta_full",
            (LsatEnsemble, FixedAfterM) => "lsat_en",
            (LsatEnsemble, RetrainEveryPeriod) => "lsat_en_full",
        }
    }

    pub const NAMES: [&'static str; 9] = [
        "full_retrain",
        "fine_tune",
        "short_term",
        "long_term",
        "long_term_full",
        "lsat_ta",
        "lsat_ta_full",
        "lsat_en",
        "lsat_en_full",
    ];
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use LongTermMode::*;
        use StrategyKind::*;
        let (kind, mode) = match s {
            "full_retrain" => (FullRetrain, FixedAfterM),
            "fine_tune" => (FineTune, FixedAfterM),
            "short_term" => (ShortTermOnly, FixedAfterM),
            "long_term" => (LongTermOnly, FixedAfterM),
            "long_term_full" => (LongTermOnly, RetrainEveryPeriod),
            "lsat_ta" => (LsatTaskArith, FixedAfterM),
            "lsat_ta_full" => (LsatTaskArith, RetrainEveryPeriod),
            "lsat_en" => (LsatEnsemble, FixedAfterM),
            "lsat_en_full" => (LsatEnsemble, RetrainEveryPeriod),
            other => {
                return Err(Error::Config(format!(
                    "unknown strategy {other:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        Ok(Self::new(kind, mode))
    }
}

/// `{0.0, 0.1, …, 1.0}`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    /// Long-term horizon: `H = D₁…D_m`.
    pub m: usize,
    pub rank: usize,
    pub scaling: f64,
    pub grid: Vec<f64>,
    pub fusion_mode: FusionMode,
    pub train: TrainConfig,
    /// First update period; defaults to `m`.
    pub first_update: Option<usize>,
    /// Last update period; defaults to `T − 1`.
    pub last_update: Option<usize>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            m: 10,
            rank: 8,
            scaling: 1.0,
            grid: default_grid(),
            fusion_mode: FusionMode::DeltaExact,
            train: TrainConfig::default(),
            first_update: None,
            last_update: None,
        }
    }
}

impl StrategyConfig {
    /// Update periods for a stream of `periods` periods.
    pub fn update_range(&self, periods: usize) -> RangeInclusive<usize> {
        self.first_update.unwrap_or(self.m)..=self.last_update.unwrap_or(periods.saturating_sub(1))
    }

    /// Every violated constraint; `periods` adds stream-dependent checks.
    pub fn violations(&self, periods: Option<usize>) -> Vec<String> {
        let mut v = Vec::new();
        if self.m == 0 {
            v.push("m must be at least 1".into());
        }
        if self.rank == 0 {
            v.push("rank must be at least 1".into());
        }
        if !(self.scaling.is_finite() && self.scaling > 0.0) {
            v.push(format!("scaling {} must be positive and finite", self.scaling));
        }
        if let Err(e) = validate_grid(&self.grid) {
            v.push(e.to_string());
        }
        if self.train.batch_size == 0 {
            v.push("batch size must be positive".into());
        }
        if !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            v.push(format!("learning rate {} must be positive", self.train.lr));
        }
        if !(self.train.weight_decay >= 0.0 && self.train.weight_decay.is_finite()) {
            v.push(format!("weight decay {} must be non-negative", self.train.weight_decay));
        }
        if let Some(t) = periods {
            if self.m >= t {
                v.push(format!("m = {} must be below the period count {t}", self.m));
            }
            let r = self.update_range(t);
            if *r.start() == 0 || r.start() > r.end() || *r.end() >= t {
                v.push(format!("update range {}..={} must lie within 1..={}", r.start(), r.end(), t.saturating_sub(1)));
            }
        }
        v
    }

    pub fn validate(&self, periods: Option<usize>) -> Result<()> {
        let v = self.violations(periods);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}

/// A freshly trained or continued adapter with its training record.
#[derive(Debug, Clone)]
pub struct Trained {
    pub adapters: AdapterSet<f64>,
    pub loss_trace: Vec<f64>,
    pub samples: usize,
}

/// Randomness for fresh adapters trained on periods `first..=last`.
pub fn window_rng(seed: u64, first: usize, last: usize) -> SeededRng {
    SeededRng::new(seed).derive("adapter").derive_indexed("first", first as u64).derive_indexed("last", last as u64)
}

fn window_tag(first: usize, last: usize) -> String {
    format!("D{first}-D{last}")
}

/// Fresh adapters trained on the train slices of `window`.
pub fn train_window(
    stream: &PeriodizedStream,
    base: &BaseParams<f64>,
    window: RangeInclusive<usize>,
    config: &StrategyConfig,
    seed: u64,
) -> Result<Trained> {
    let (first, last) = (*window.start(), *window.end());
    let data = stream.train_union(window)?;
    let rng = window_rng(seed, first, last);
    let init = init_adapter_set(base, config.rank, config.scaling, &window_tag(first, last), &mut rng.derive("init"))?;
    let out = train_adapter(&data, base, &init, &config.train, &mut rng.derive("shuffle"))?;
    Ok(Trained { adapters: out.adapters, loss_trace: out.epoch_losses, samples: out.samples })
}
