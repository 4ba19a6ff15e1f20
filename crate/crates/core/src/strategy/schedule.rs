use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    select_coefficient, train_window, window_rng, Combination, LongTermMode, Selection, StrategyConfig, StrategyKind,
    StrategySpec, Trained,
};
use crate::adapter::{adapter_set_digest, save_adapter_set, AdapterSet};
use crate::error::{Error, Result};
use crate::eval::{
    auc, evaluate_with_breakdown, json_digest, Aggregate, ExperimentResult, PeriodRecord, ScoredSet, RESULT_FORMAT,
};
use crate::math::SeededRng;
use crate::model::{pretrain_base, train_adapter, BaseParams, PretrainConfig, Sample};
use crate::stream::{cold_warm_sets, PeriodizedStream};

/// What one strategy produced at update period `t`.
#[derive(Debug, Clone)]
pub struct PeriodArtifacts {
    pub period: usize,
    pub spec: StrategySpec,
    /// The adapter this strategy serves with alone (`Θ_t` for the combined
    /// strategies, `Θ_h` for the long-term-only row).
    pub adapters: AdapterSet<f64>,
    pub long_term: Option<AdapterSet<f64>>,
    /// Present iff the strategy combines two adapters.
    pub selection: Option<Selection>,
    pub loss_trace: Vec<f64>,
    /// Samples trained on in this period (0 when nothing was trained).
    pub train_size: usize,
    pub long_train_size: Option<usize>,
}

/// Wall-clock per period, kept out of the result file so that file stays
/// byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodTiming {
    pub strategy: String,
    pub period: usize,
    pub millis: u128,
}

#[derive(Debug, Clone)]
pub struct ScheduleOutcome {
    pub result: ExperimentResult,
    pub artifacts: Vec<PeriodArtifacts>,
    pub timings: Vec<PeriodTiming>,
}

/// Run-level settings echoed into the result file.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub dataset: String,
    pub seed: u64,
    pub echo: serde_json::Value,
    /// Where long-term (and optionally short-term) checkpoints are written.
    pub checkpoint_dir: Option<PathBuf>,
    pub keep_short_term: bool,
}

/// Pretrains the frozen base on the train slices of `D₁…D_m`
/// (sub-stream `base` of the seed).
pub fn pretrain_for_stream(
    stream: &PeriodizedStream,
    m: usize,
    config: &PretrainConfig,
    seed: u64,
) -> Result<BaseParams<f64>> {
    if m == 0 || m > stream.num_periods() {
        return Err(Error::Config(format!("pretraining horizon {m} outside 1..={}", stream.num_periods())));
    }
    let data = stream.train_union(1..=m)?;
    Ok(pretrain_base(&data, config, &SeededRng::new(seed).derive("base"))?.base)
}

fn artifacts(spec: StrategySpec, t: usize, trained: Trained) -> PeriodArtifacts {
    PeriodArtifacts {
        period: t,
        spec,
        adapters: trained.adapters,
        long_term: None,
        selection: None,
        loss_trace: trained.loss_trace,
        train_size: trained.samples,
        long_train_size: None,
    }
}

fn check_update_period(stream: &PeriodizedStream, t: usize) -> Result<()> {
    if t == 0 || t >= stream.num_periods() {
        return Err(Error::Schedule(format!(
            "update period {t} outside 1..={}",
            stream.num_periods().saturating_sub(1)
        )));
    }
    Ok(())
}

/// Fresh adapter on the train slices of `D₁…D_t`.
pub fn run_full_retrain(
    stream: &PeriodizedStream,
    base: &BaseParams<f64>,
    t: usize,
    config: &StrategyConfig,
    seed: u64,
) -> Result<PeriodArtifacts> {
    check_update_period(stream, t)?;
    let trained = train_window(stream, base, 1..=t, config, seed)?;
    Ok(artifacts(StrategySpec::simple(StrategyKind::FullRetrain), t, trained))
}

/// Fresh adapter on the train slice of `D_t` alone.
pub fn run_short_term(
    stream: &PeriodizedStream,
    base: &BaseParams<f64>,
    t: usize,
    config: &StrategyConfig,
    seed: u64,
) -> Result<PeriodArtifacts> {
    check_update_period(stream, t)?;
    let trained = train_window(stream, base, t..=t, config, seed)?;
    Ok(artifacts(StrategySpec::simple(StrategyKind::ShortTermOnly), t, trained))
}

/// Continues `previous` on the train slice of `D_t`; at `t = 1` starts fresh.
pub fn run_fine_tune(
    stream: &PeriodizedStream,
    base: &BaseParams<f64>,
    t: usize,
    previous: Option<&AdapterSet<f64>>,
    config: &StrategyConfig,
    seed: u64,
) -> Result<PeriodArtifacts> {
    check_update_period(stream, t)?;
    let spec = StrategySpec::simple(StrategyKind::FineTune);
    let trained = match (t, previous) {
        (1, _) => train_window(stream, base, 1..=1, config, seed)?,
        (_, None) => return Err(Error::Usage(format!("fine-tuning at period {t} needs the period {} adapter", t - 1))),
        (_, Some(prev)) => {
            let data = stream.train_union(t..=t)?;
            let mut init = prev.clone();
            init.set_tag(format!("D1-D{t}/sequential"));
            let out = train_adapter(&data, base, &init, &config.train, &mut window_rng(seed, t, t).derive("shuffle"))?;
            Trained { adapters: out.adapters, loss_trace: out.epoch_losses, samples: out.samples }
        }
    };
    Ok(artifacts(spec, t, trained))
}

/// Long-term window at period `t` for `mode`.
fn long_window(t: usize, m: usize, mode: LongTermMode) -> Result<RangeInclusive<usize>> {
    match mode {
        LongTermMode::FixedAfterM if t < m => Err(Error::Schedule(format!(
            "period {t} precedes the long-term horizon m = {m}; fixed long-term adapters serve from t = m"
        ))),
        LongTermMode::FixedAfterM => Ok(1..=m),
        LongTermMode::RetrainEveryPeriod => Ok(1..=t),
    }
}

/// Holds the current long-term adapter between periods.
#[derive(Debug, Default)]
pub struct LongTermStore {
    current: Option<(RangeInclusive<usize>, Trained)>,
    checkpoint_dir: Option<PathBuf>,
}

impl LongTermStore {
    pub fn new(checkpoint_dir: Option<PathBuf>) -> Self {
        Self { current: None, checkpoint_dir }
    }

    /// Returns the adapter for `window` and whether it was trained just now.
    fn get(
        &mut self,
        stream: &PeriodizedStream,
        base: &BaseParams<f64>,
        window: RangeInclusive<usize>,
        config: &StrategyConfig,
        seed: u64,
    ) -> Result<(&Trained, bool)> {
        let fresh = self.current.as_ref().is_none_or(|(w, _)| *w != window);
        if fresh {
            let trained = train_window(stream, base, window.clone(), config, seed)?;
            if let Some(dir) = &self.checkpoint_dir {
                let path = dir.join(format!("long_term_D{}-D{}.lsat", window.start(), window.end()));
                save_adapter_set(&trained.adapters, path)?;
            }
            self.current = Some((window, trained));
        }
        Ok((&self.current.as_ref().expect("just set").1, fresh))
    }
}

/// Long-term adapter alone.
pub fn run_long_term(
    stream: &PeriodizedStream,
    base: &BaseParams<f64>,
    t: usize,
    mode: LongTermMode,
    store: &mut LongTermStore,
    config: &StrategyConfig,
    seed: u64,
) -> Result<PeriodArtifacts> {
    check_update_period(stream, t)?;
    let window = long_window(t, config.m, mode)?;
    let (long, fresh) = store.get(stream, base, window, config, seed)?;
    Ok(PeriodArtifacts {
        period: t,
        spec: StrategySpec::new(StrategyKind::LongTermOnly, mode),
        adapters: long.adapters.clone(),
        long_term: Some(long.adapters.clone()),
        selection: None,
        loss_trace: if fresh { long.loss_trace.clone() } else { Vec::new() },
        train_size: if fresh { long.samples } else { 0 },
        long_train_size: Some(long.samples),
    })
}

/// Short-term adapter from scratch on `D_t`, long-term adapter per mode,
/// and the coefficient chosen on the validation slice of `D_t`.
pub fn run_lsat_period(
    stream: &PeriodizedStream,
    base: &BaseParams<f64>,
    t: usize,
    spec: StrategySpec,
    store: &mut LongTermStore,
    config: &StrategyConfig,
    seed: u64,
) -> Result<PeriodArtifacts> {
    let combination = match spec.kind {
        StrategyKind::LsatEnsemble => Combination::Ensemble,
        StrategyKind::LsatTaskArith => Combination::TaskArith(config.fusion_mode),
        other => return Err(Error::Usage(format!("{other:?} is not an LSAT strategy"))),
    };
    check_update_period(stream, t)?;
    let window = long_window(t, config.m, spec.long_term_mode)?;
    let short = train_window(stream, base, t..=t, config, seed)?;
    let (long, _) = store.get(stream, base, window, config, seed)?;
    let val = &stream.period(t)?.val;
    let selection = select_coefficient(val, base, &long.adapters, &short.adapters, &config.grid, combination)?;
    Ok(PeriodArtifacts {
        period: t,
        spec,
        long_term: Some(long.adapters.clone()),
        long_train_size: Some(long.samples),
        adapters: short.adapters,
        selection: Some(selection),
        loss_trace: short.loss_trace,
        train_size: short.samples,
    })
}

fn val_auc(samples: &[Sample], base: &BaseParams<f64>, adapters: &AdapterSet<f64>) -> Result<Option<f64>> {
    let scores = base.predict(samples, Some(adapters))?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    match auc(&scores, &labels) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn test_scores(
    art: &PeriodArtifacts,
    base: &BaseParams<f64>,
    test: &[Sample],
    config: &StrategyConfig,
) -> Result<Vec<f64>> {
    match (&art.selection, &art.long_term) {
        (Some(sel), Some(long)) => {
            let combination = match art.spec.kind {
                StrategyKind::LsatEnsemble => Combination::Ensemble,
                _ => Combination::TaskArith(config.fusion_mode),
            };
            super::combined_scores(test, base, long, &art.adapters, sel.coefficient, combination)
        }
        _ => base.predict(test, Some(&art.adapters)),
    }
}

fn record(
    art: &PeriodArtifacts,
    stream: &PeriodizedStream,
    base: &BaseParams<f64>,
    base_hash: &str,
    config: &StrategyConfig,
) -> Result<PeriodRecord> {
    let t = art.period;
    let test_period = stream.period(t + 1)?;
    let test = test_period.all_samples();
    let scores = test_scores(art, base, &test, config)?;
    let labels: Vec<u8> = test.iter().map(|s| s.label).collect();
    let items: Vec<u32> = test.iter().map(|s| s.target_item).collect();
    let set = ScoredSet::with_items(scores, labels, items)?;
    let (warm, cold) = cold_warm_sets(stream, 1..=t, t + 1..=t + 1)?;
    let b = evaluate_with_breakdown(&set, &warm, &cold)?;
    let overall =
        b.overall.ok_or_else(|| Error::UndefinedMetric(format!("test period {} has a single class", t + 1)))?;
    let val = &stream.period(t)?.val;
    let (val_auc_short, val_auc_long, val_sel) = match (&art.selection, &art.long_term) {
        (Some(sel), Some(long)) => (val_auc(val, base, &art.adapters)?, val_auc(val, base, long)?, Some(sel.val_auc)),
        _ => (None, None, val_auc(val, base, &art.adapters)?),
    };
    Ok(PeriodRecord {
        period: t,
        test_period: t + 1,
        auc: overall,
        auc_warm: b.warm,
        auc_cold: b.cold,
        n_warm: b.n_warm,
        n_cold: b.n_cold,
        coefficient: art.selection.as_ref().map(|s| s.coefficient),
        val_auc: val_sel,
        val_auc_short,
        val_auc_long,
        train_size: art.train_size,
        long_train_size: art.long_train_size,
        test_size: test.len(),
        loss_trace: art.loss_trace.clone(),
        adapter_digest: Some(adapter_set_digest(&art.adapters)?),
        long_digest: art.long_term.as_ref().map(adapter_set_digest).transpose()?,
        base_hash: base_hash.to_string(),
    })
}

/// The configuration object echoed into (and hashed for) a result file.
pub fn result_config(spec: StrategySpec, config: &StrategyConfig, ctx: &RunContext) -> serde_json::Value {
    json!({
        "dataset": ctx.dataset,
        "seed": ctx.seed,
        "strategy": spec.name(),
        "fusion_mode": config.fusion_mode.to_string(),
        "settings": config,
        "run": ctx.echo,
    })
}

/// Updates at every period of the configured range, each tested on the
/// whole following period. Any period failure aborts with its index.
pub fn run_schedule(
    stream: &PeriodizedStream,
    base: &BaseParams<f64>,
    spec: StrategySpec,
    config: &StrategyConfig,
    ctx: &RunContext,
) -> Result<ScheduleOutcome> {
    let periods = stream.num_periods();
    config.validate(Some(periods))?;
    let range = config.update_range(periods);
    if spec.kind.uses_long_term() && spec.long_term_mode == LongTermMode::FixedAfterM && *range.start() < config.m {
        return Err(Error::Schedule(format!(
            "{} needs updates to start at m = {} or later, not {}",
            spec.label(),
            config.m,
            range.start()
        )));
    }
    let base_hash = base.verify_frozen()?;
    if let Some(dir) = &ctx.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let seed = ctx.seed;
    let mut store = LongTermStore::new(ctx.checkpoint_dir.clone());
    let mut previous: Option<AdapterSet<f64>> = None;
    let mut artifacts = Vec::new();
    let mut records = Vec::new();
    let mut timings = Vec::new();
    let start_t = if spec.kind == StrategyKind::FineTune { 1 } else { *range.start() };

    for t in start_t..=*range.end() {
        let started = Instant::now();
        let mut step = || -> Result<Option<(PeriodArtifacts, PeriodRecord)>> {
            let art = match spec.kind {
                StrategyKind::FullRetrain => run_full_retrain(stream, base, t, config, seed)?,
                StrategyKind::FineTune => run_fine_tune(stream, base, t, previous.as_ref(), config, seed)?,
                StrategyKind::ShortTermOnly => run_short_term(stream, base, t, config, seed)?,
                StrategyKind::LongTermOnly => {
                    run_long_term(stream, base, t, spec.long_term_mode, &mut store, config, seed)?
                }
                StrategyKind::LsatEnsemble | StrategyKind::LsatTaskArith => {
                    run_lsat_period(stream, base, t, spec, &mut store, config, seed)?
                }
            };
            let after = base.content_hash();
            if after != base_hash {
                return Err(Error::BaseModified { before: base_hash.clone(), after });
            }
            if !range.contains(&t) {
                previous = Some(art.adapters.clone());
                return Ok(None);
            }
            let rec = record(&art, stream, base, &base_hash, config)?;
            previous = Some(art.adapters.clone());
            Ok(Some((art, rec)))
        };
        let out = step().map_err(|e| Error::Period { period: t, source: Box::new(e) })?;
        if let Some((art, rec)) = out {
            if let (Some(dir), true) = (&ctx.checkpoint_dir, ctx.keep_short_term) {
                save_adapter_set(&art.adapters, dir.join(format!("{}_t{t}.lsat", spec.name())))?;
            }
            records.push(rec);
            artifacts.push(art);
            timings.push(PeriodTiming {
                strategy: spec.row_label(config.m),
                period: t,
                millis: started.elapsed().as_millis(),
            });
        }
    }

    let window = *range.start() + 1..=*range.end() + 1;
    let aggregate = Aggregate::over(&records, window);
    let config_echo = result_config(spec, config, ctx);
    let result = ExperimentResult {
        format: RESULT_FORMAT.to_string(),
        dataset: ctx.dataset.clone(),
        strategy: spec.row_label(config.m),
        seed,
        fusion_mode: config.fusion_mode.to_string(),
        config_hash: json_digest(&config_echo)?,
        config: config_echo,
        base_hash,
        records,
        aggregate,
    };
    Ok(ScheduleOutcome { result, artifacts, timings })
}
