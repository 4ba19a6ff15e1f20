//! Acceptance harness: one `[PASS]`/`[FAIL]` line per criterion, non-zero
//! exit if any criterion fails. Run with `cargo test --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use lsat_core::adapter::{
    encode_adapter_set, fuse_task_arithmetic, AdapterSet, FusionCoefficient, FusionMode, LoraAdapter,
};
use lsat_core::eval::{auc, auc_oracle, emit_report, render_comparison, ExperimentResult};
use lsat_core::math::{Matrix, SeededRng};
use lsat_core::model::{
    backward_adapters, encode_base, mf_train, save_base, BaseParams, MfConfig, PretrainConfig, Sample, TrainConfig,
};
use lsat_core::strategy::{
    combined_scores, default_grid, predict_lsat_ensemble, pretrain_for_stream, run_fine_tune, run_full_retrain,
    run_long_term, run_lsat_period, run_schedule, run_short_term, Combination, LongTermMode, LongTermStore, RunContext,
    ScheduleOutcome, StrategyConfig, StrategyKind, StrategySpec,
};
use lsat_core::stream::{cold_warm_sets, synth_drift, write_dataset, PeriodizedStream, SynthConfig};

type Outcome = Result<(bool, String), String>;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

fn replace_factor(set: &AdapterSet<f64>, layer: &str, which_a: bool, m: Matrix<f64>) -> AdapterSet<f64> {
    let ad = set.get(layer).expect("layer present");
    let (a, b) = if which_a { (m, ad.b().clone()) } else { (ad.a().clone(), m) };
    let mut out = set.clone();
    out.insert(LoraAdapter::from_factors(layer, a, b, ad.scaling()).expect("valid factors"));
    out
}

/// Central differences of the oracle loss over every entry of one factor.
fn numeric_factor_grad(
    base: &BaseParams<f64>,
    set: &AdapterSet<f64>,
    layer: &str,
    which_a: bool,
    batch: &[Sample],
) -> Matrix<f64> {
    let h = 1e-5;
    let ad = set.get(layer).expect("layer present");
    let p = if which_a { ad.a().clone() } else { ad.b().clone() };
    Matrix::from_fn(p.rows(), p.cols(), |r, c| {
        let mut plus = p.clone();
        plus.set(r, c, p.get(r, c) + h).unwrap();
        let mut minus = p.clone();
        minus.set(r, c, p.get(r, c) - h).unwrap();
        let lp = oracle_bce(base, Some(&replace_factor(set, layer, which_a, plus)), batch);
        let lm = oracle_bce(base, Some(&replace_factor(set, layer, which_a, minus)), batch);
        (lp - lm) / (2.0 * h)
    })
    .unwrap()
}

fn c1_gradients() -> Outcome {
    let started = Instant::now();
    let mut rng = SeededRng::new(0xC1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = 2 + rng.below(3);
        let h = 2 + rng.below(5);
        let base = random_base(8, d, h, &mut rng);
        let rank = 1 + rng.below((2 * d).min(h) / 2);
        let set = random_adapters(&base, rank, 0.5, "grad", &mut rng);
        let batch = random_samples(1 + rng.below(12), 8, &mut rng);
        let grads = backward_adapters(&batch, &base, &set).map_err(err)?;
        for ad in set.iter() {
            for which_a in [true, false] {
                let g = &grads.layers[ad.target()];
                let analytic = if which_a { &g.a } else { &g.b };
                let numeric = numeric_factor_grad(&base, &set, ad.target(), which_a, &batch);
                for (x, y) in analytic.as_slice().iter().zip(numeric.as_slice()) {
                    worst = worst.max(relative_error(*x, *y));
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Ok((worst <= 1e-4 && secs < 10.0, format!("max relative error {worst:.3e} (tol 1e-4), {secs:.2}s (limit 10s)")))
}

fn c2_merge() -> Outcome {
    let mut rng = SeededRng::new(0xC2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = 2 + rng.below(5);
        let h = 2 + rng.below(7);
        let base = random_base(10, d, h, &mut rng);
        let rank = 1 + rng.below((2 * d).min(h) / 2);
        let scaling = [0.5, 1.0, 2.0][rng.below(3)];
        let raw = random_adapters(&base, rank, 1.0, "merge", &mut rng);
        let mut set = AdapterSet::new("merge");
        for ad in raw.iter() {
            set.insert(ad.clone().with_scaling(scaling));
        }
        let merged = dense_merged_base(&base, &set);
        for x in random_samples(8, 10, &mut rng) {
            let on_the_fly = base.forward(&x, Some(&set)).map_err(err)?;
            let premerged = merged.forward(&x, None).map_err(err)?;
            let oracle = oracle_predict(&base, Some(&set), &x);
            worst = worst.max((on_the_fly - premerged).abs()).max((on_the_fly - oracle).abs());
        }
    }
    Ok((worst <= 1e-10, format!("max |on-the-fly - merged| {worst:.3e} over 100 cases (tol 1e-10)")))
}

fn c3_fusion() -> Outcome {
    let mut rng = SeededRng::new(0xC3);
    let mut worst_dense = 0.0f64;
    let mut worst_boundary = 0.0f64;
    for case in 0..20 {
        let d = 2 + rng.below(4);
        let h = 4 + rng.below(5);
        let base = random_base(10, d, h, &mut rng);
        let cap = (2 * d).min(h) / 2;
        let long = random_adapters(&base, 1 + rng.below(cap), 1.0, "long", &mut rng);
        let short = random_adapters(&base, 1 + rng.below(cap), 1.0, "short", &mut rng);
        let samples = random_samples(10, 10, &mut rng);
        for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let c = FusionCoefficient::new(lambda).map_err(err)?;
            let fused = fuse_task_arithmetic(&long, &short, c, FusionMode::DeltaExact).map_err(err)?;
            let dense = |layer: &str, w: &Matrix<f64>| {
                let mix = dense_add(
                    &dense_delta(long.get(layer).unwrap()),
                    &dense_delta(short.get(layer).unwrap()),
                    lambda,
                    1.0 - lambda,
                );
                dense_add(&to_dense(w), &mix, 1.0, 1.0)
            };
            let w1 = dense("W1", base.w1());
            let w2 = dense("W2", base.w2());
            for x in &samples {
                let p = base.forward(x, Some(&fused)).map_err(err)?;
                worst_dense = worst_dense.max((p - oracle_forward(&base, &w1, &w2, x)).abs());
            }
        }
        // Boundary laws in both modes; factor interpolation needs equal ranks.
        let rank = 1 + case % cap;
        let long_eq = random_adapters(&base, rank, 1.0, "long", &mut rng);
        let short_eq = random_adapters(&base, rank, 1.0, "short", &mut rng);
        let pairs = [
            (FusionMode::DeltaExact, &long, &short),
            (FusionMode::DeltaExact, &long_eq, &short_eq),
            (FusionMode::FactorInterp, &long_eq, &short_eq),
        ];
        for (mode, l, s) in pairs {
            for (lambda, expect) in [(1.0, l), (0.0, s)] {
                let fused =
                    fuse_task_arithmetic(l, s, FusionCoefficient::new(lambda).map_err(err)?, mode).map_err(err)?;
                for ad in expect.iter() {
                    let got = fused.get(ad.target()).unwrap().effective_delta().map_err(err)?;
                    let want = ad.effective_delta().map_err(err)?;
                    worst_boundary = worst_boundary.max(got.max_abs_diff(&want).map_err(err)?);
                }
            }
        }
    }
    Ok((
        worst_dense <= 1e-12 && worst_boundary <= 1e-15,
        format!("dense-delta gap {worst_dense:.3e} (tol 1e-12), endpoint delta gap {worst_boundary:.3e} (tol 1e-15)"),
    ))
}

fn c4_ensemble() -> Outcome {
    let mut rng = SeededRng::new(0xC4);
    let (mut endpoint_mismatches, mut outside, mut evaluated) = (0usize, 0usize, 0usize);
    for _ in 0..10 {
        let base = random_base(12, 3, 6, &mut rng);
        let long = random_adapters(&base, 2, 1.0, "long", &mut rng);
        let short = random_adapters(&base, 3, 1.0, "short", &mut rng);
        for x in random_samples(20, 12, &mut rng) {
            let fh = base.forward(&x, Some(&long)).map_err(err)?;
            let ft = base.forward(&x, Some(&short)).map_err(err)?;
            if predict_lsat_ensemble(&x, &base, &long, &short, 1.0).map_err(err)?.to_bits() != fh.to_bits()
                || predict_lsat_ensemble(&x, &base, &long, &short, 0.0).map_err(err)?.to_bits() != ft.to_bits()
            {
                endpoint_mismatches += 1;
            }
            for alpha in default_grid().into_iter().chain([0.33, 0.999]) {
                let p = predict_lsat_ensemble(&x, &base, &long, &short, alpha).map_err(err)?;
                evaluated += 1;
                if p < fh.min(ft) || p > fh.max(ft) {
                    outside += 1;
                }
            }
        }
    }
    Ok((
        endpoint_mismatches == 0 && outside == 0,
        format!("{endpoint_mismatches} endpoint mismatches, {outside}/{evaluated} outputs outside [min, max]"),
    ))
}

fn c5_auc() -> Outcome {
    let mut rng = SeededRng::new(0xC5);
    let mut worst = 0.0f64;
    let mut invariance_breaks = 0usize;
    for _ in 0..200 {
        let n = 2 + rng.below(63);
        let levels = 1 + rng.below(12);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / 16.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.5))).collect();
        let i = rng.below(n);
        labels[i] = 1;
        labels[(i + 1 + rng.below(n - 1)) % n] = 0;
        let fast = auc(&scores, &labels).map_err(err)?;
        let pairs = pair_auc(&scores, &labels).expect("both classes");
        let library_oracle = auc_oracle(&scores, &labels).map_err(err)?;
        worst = worst.max((fast - pairs).abs()).max((fast - library_oracle).abs());
        for transform in [|v: f64| 3.0 * v + 1.0, |v: f64| v * v * v] {
            let moved: Vec<f64> = scores.iter().map(|&v| transform(v)).collect();
            if auc(&moved, &labels).map_err(err)?.to_bits() != fast.to_bits() {
                invariance_breaks += 1;
            }
        }
    }
    Ok((
        worst <= 1e-12 && invariance_breaks == 0,
        format!("max |sort - pair count| {worst:.3e} over 200 sets (tol 1e-12), {invariance_breaks} transform changes"),
    ))
}

/// Updates one strategy at period `t` through the per-period entry points.
#[allow(clippy::too_many_arguments)]
fn update_once(
    stream: &PeriodizedStream,
    base: &BaseParams<f64>,
    spec: StrategySpec,
    t: usize,
    previous: Option<&AdapterSet<f64>>,
    store: &mut LongTermStore,
    cfg: &StrategyConfig,
    seed: u64,
) -> lsat_core::Result<AdapterSet<f64>> {
    let art = match spec.kind {
        StrategyKind::FullRetrain => run_full_retrain(stream, base, t, cfg, seed)?,
        StrategyKind::FineTune => run_fine_tune(stream, base, t, previous, cfg, seed)?,
        StrategyKind::ShortTermOnly => run_short_term(stream, base, t, cfg, seed)?,
        StrategyKind::LongTermOnly => run_long_term(stream, base, t, spec.long_term_mode, store, cfg, seed)?,
        StrategyKind::LsatEnsemble | StrategyKind::LsatTaskArith => {
            run_lsat_period(stream, base, t, spec, store, cfg, seed)?
        }
    };
    Ok(art.adapters)
}

fn c6_frozen_base() -> Outcome {
    let seed = 6;
    let synth = SynthConfig { users: 200, items: 80, periods: 6, period_size: 300, seed, ..SynthConfig::default() };
    let stream = synth_drift(&synth).map_err(err)?;
    let pre =
        PretrainConfig { train: TrainConfig { epochs: 5, ..TrainConfig::default() }, ..PretrainConfig::default() };
    let base = pretrain_for_stream(&stream, 2, &pre, seed).map_err(err)?;
    let hash = base.content_hash();
    let bytes = encode_base(&base).map_err(err)?;
    let cfg = StrategyConfig {
        m: 2,
        train: TrainConfig { epochs: 3, ..TrainConfig::default() },
        ..StrategyConfig::default()
    };
    let (mut checks, mut changed) = (0usize, 0usize);
    for name in StrategySpec::NAMES {
        let spec: StrategySpec = name.parse().map_err(err)?;
        let first =
            if spec.kind.uses_long_term() && spec.long_term_mode == LongTermMode::FixedAfterM { cfg.m } else { 1 };
        let mut store = LongTermStore::new(None);
        let mut previous = None;
        for t in first..stream.num_periods() {
            let next = update_once(&stream, &base, spec, t, previous.as_ref(), &mut store, &cfg, seed).map_err(err)?;
            previous = Some(next);
            checks += 1;
            if base.content_hash() != hash || base.verify_frozen().is_err() {
                changed += 1;
            }
        }
        let out =
            run_schedule(&stream, &base, spec, &cfg, &RunContext { seed, ..RunContext::default() }).map_err(err)?;
        checks += out.result.records.len();
        changed += out.result.records.iter().filter(|r| r.base_hash != hash).count();
    }
    let bytes_equal = encode_base(&base).map_err(err)? == bytes;
    Ok((
        changed == 0 && bytes_equal,
        format!("{checks} period checks over 9 strategies, {changed} hash changes, checkpoint bytes unchanged: {bytes_equal}"),
    ))
}

/// Artifacts of one full default-size run, kept for the later criteria.
struct FullRun {
    stream: PeriodizedStream,
    base: BaseParams<f64>,
    config: StrategyConfig,
    outcomes: Vec<ScheduleOutcome>,
    files: BTreeMap<String, Vec<u8>>,
    elapsed: Duration,
}

fn read_tree(dir: &Path, prefix: &str, out: &mut BTreeMap<String, Vec<u8>>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        let name = format!("{prefix}{}", path.file_name().unwrap().to_string_lossy());
        if path.is_dir() {
            read_tree(&path, &format!("{name}/"), out);
        } else {
            out.insert(name, fs::read(&path).unwrap());
        }
    }
}

fn full_run(dir: &Path) -> Result<FullRun, String> {
    let started = Instant::now();
    let seed = 0;
    let synth = SynthConfig { seed, ..SynthConfig::default() };
    let stream = synth_drift(&synth).map_err(err)?;
    write_dataset(&stream, &serde_json::to_string(&synth).map_err(err)?, dir.join("dataset.txt")).map_err(err)?;
    let config = StrategyConfig::default();
    let base = pretrain_for_stream(&stream, config.m, &PretrainConfig::default(), seed).map_err(err)?;
    save_base(&base, dir.join("base.lsat")).map_err(err)?;
    let ctx = RunContext { dataset: "synthetic".into(), seed, ..RunContext::default() };
    let mut outcomes = Vec::new();
    for spec in StrategySpec::table_rows() {
        let out = run_schedule(&stream, &base, spec, &config, &ctx).map_err(err)?;
        out.result.save(dir.join(format!("{}-seed{seed}.json", spec.name()))).map_err(err)?;
        outcomes.push(out);
    }
    let results: Vec<ExperimentResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    emit_report(&results, dir.join("report")).map_err(err)?;
    let elapsed = started.elapsed();
    let mut files = BTreeMap::new();
    read_tree(dir, "", &mut files);
    Ok(FullRun { stream, base, config, outcomes, files, elapsed })
}

fn c7_determinism(slot: &mut Option<FullRun>) -> Outcome {
    let first_dir = tempfile::tempdir().map_err(err)?;
    let second_dir = tempfile::tempdir().map_err(err)?;
    let first = full_run(first_dir.path())?;
    let second = full_run(second_dir.path())?;
    let differing: Vec<&String> = first
        .files
        .iter()
        .filter(|(name, bytes)| second.files.get(*name) != Some(bytes))
        .map(|(name, _)| name)
        .collect();
    let same_names = first.files.keys().eq(second.files.keys());
    let total = first.elapsed + second.elapsed;
    let detail = format!(
        "{} files compared, {} differ{}, two runs took {:.0}s (limit 900s)",
        first.files.len(),
        differing.len(),
        if differing.is_empty() { String::new() } else { format!(" {differing:?}") },
        total.as_secs_f64()
    );
    let pass = differing.is_empty() && same_names && first.outcomes.len() == 7 && total <= Duration::from_secs(900);
    *slot = Some(first);
    Ok((pass, detail))
}

fn need(slot: &mut Option<FullRun>) -> Result<&FullRun, String> {
    if slot.is_none() {
        let dir = tempfile::tempdir().map_err(err)?;
        *slot = Some(full_run(dir.path())?);
    }
    Ok(slot.as_ref().expect("just filled"))
}

fn c8_dominance(slot: &mut Option<FullRun>) -> Outcome {
    let run = need(slot)?;
    let (mut periods, mut violations) = (0usize, 0usize);
    for out in run.outcomes.iter().filter(|o| o.artifacts.iter().any(|a| a.selection.is_some())) {
        for art in &out.artifacts {
            let sel = art.selection.as_ref().ok_or("combined strategy without a selection")?;
            let long = art.long_term.as_ref().ok_or("combined strategy without a long-term adapter")?;
            let val = &run.stream.period(art.period).map_err(err)?.val;
            let labels = labels_of(val);
            let fh = run.base.predict(val, Some(long)).map_err(err)?;
            let ft = run.base.predict(val, Some(&art.adapters)).map_err(err)?;
            let combined: Vec<f64> = match art.spec.kind {
                StrategyKind::LsatEnsemble => {
                    fh.iter().zip(&ft).map(|(h, t)| sel.coefficient * h + (1.0 - sel.coefficient) * t).collect()
                }
                _ => combined_scores(
                    val,
                    &run.base,
                    long,
                    &art.adapters,
                    sel.coefficient,
                    Combination::TaskArith(run.config.fusion_mode),
                )
                .map_err(err)?,
            };
            let (a_h, a_t, a_sel) = (
                pair_auc(&fh, &labels).ok_or("single-class validation slice")?,
                pair_auc(&ft, &labels).ok_or("single-class validation slice")?,
                pair_auc(&combined, &labels).ok_or("single-class validation slice")?,
            );
            periods += 1;
            if a_sel < a_h || a_sel < a_t || a_sel != sel.val_auc {
                violations += 1;
            }
        }
    }
    Ok((
        periods == 30 && violations == 0,
        format!("{periods} (strategy, period) selections over LSAT-TA, LSAT-EN (full), LSAT-EN; {violations} below an endpoint"),
    ))
}

fn holdout_auc(base: &BaseParams<f64>, adapters: &AdapterSet<f64>, holdout: &[Sample]) -> Result<f64, String> {
    let scores = base.predict(holdout, Some(adapters)).map_err(err)?;
    pair_auc(&scores, &labels_of(holdout)).ok_or_else(|| "single-class holdout".to_string())
}

fn c9_forgetting() -> Outcome {
    let config = StrategyConfig::default();
    let mut wins = 0usize;
    let mut cells = Vec::new();
    for seed in SEEDS {
        let stream = synth_drift(&SynthConfig { seed, ..SynthConfig::default() }).map_err(err)?;
        let base = pretrain_for_stream(&stream, config.m, &PretrainConfig::default(), seed).map_err(err)?;
        let mut tuned: Option<AdapterSet<f64>> = None;
        for t in 1..=10 {
            tuned = Some(run_fine_tune(&stream, &base, t, tuned.as_ref(), &config, seed).map_err(err)?.adapters);
        }
        let retrained = run_full_retrain(&stream, &base, 10, &config, seed).map_err(err)?.adapters;
        let holdout = &stream.period(1).map_err(err)?.val;
        let ft = holdout_auc(&base, tuned.as_ref().expect("ten updates"), holdout)?;
        let fr = holdout_auc(&base, &retrained, holdout)?;
        if ft < fr {
            wins += 1;
        }
        cells.push(format!("{ft:.4}<{fr:.4}"));
    }
    Ok((wins >= 4, format!("fine-tune below full retrain on the D1 holdout in {wins}/5 seeds [{}]", cells.join(", "))))
}

fn c10_cold_items() -> Outcome {
    let mut aucs = Vec::new();
    for seed in SEEDS {
        let stream = synth_drift(&SynthConfig { seed, ..SynthConfig::default() }).map_err(err)?;
        let train: Vec<Sample> = (1..=15).flat_map(|t| stream.period(t).unwrap().all_samples()).collect();
        let mf = mf_train::<f64>(&train, &MfConfig::default(), &SeededRng::new(seed).derive("mf")).map_err(err)?;
        let (_, cold) = cold_warm_sets(&stream, 1..=15, 16..=20).map_err(err)?;
        let slice: Vec<Sample> = (16..=20)
            .flat_map(|t| stream.period(t).unwrap().all_samples())
            .filter(|s| cold.contains(&s.target_item))
            .collect();
        let scores = mf.predict_samples(&slice);
        aucs.push(pair_auc(&scores, &labels_of(&slice)).ok_or("single-class cold slice")?);
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let per_seed: Vec<String> = aucs.iter().map(|a| format!("{a:.4}")).collect();
    Ok(((0.45..=0.55).contains(&mean), format!("mean cold AUC {mean:.4} in [0.45, 0.55] [{}]", per_seed.join(", "))))
}

const TABLE_ROWS: [&str; 7] = [
    "Full Retraining",
    "Fine-tuning",
    "Short-term LoRA",
    "Long-term LoRA",
    "LSAT-TA (10)",
    "LSAT-EN (full)",
    "LSAT-EN (10)",
];

fn c11_protocol(slot: &mut Option<FullRun>) -> Outcome {
    let run = need(slot)?;
    let mut problems = Vec::new();
    let mut worst_mean = 0.0f64;
    let mut worst_auc = 0.0f64;
    for out in &run.outcomes {
        let r = &out.result;
        let periods: Vec<usize> = r.records.iter().map(|x| x.period).collect();
        if periods != (10..=19).collect::<Vec<_>>() {
            problems.push(format!("{}: update periods {periods:?}", r.strategy));
        }
        for (rec, art) in r.records.iter().zip(&out.artifacts) {
            let test = run.stream.period(rec.period + 1).map_err(err)?.all_samples();
            if rec.test_period != rec.period + 1 || rec.test_size != test.len() {
                problems.push(format!("{}: period {} tested on {}", r.strategy, rec.period, rec.test_period));
            }
            let scores = match (&art.selection, &art.long_term) {
                (Some(sel), Some(long)) => {
                    let combination = if art.spec.kind == StrategyKind::LsatEnsemble {
                        Combination::Ensemble
                    } else {
                        Combination::TaskArith(run.config.fusion_mode)
                    };
                    combined_scores(&test, &run.base, long, &art.adapters, sel.coefficient, combination).map_err(err)?
                }
                _ => run.base.predict(&test, Some(&art.adapters)).map_err(err)?,
            };
            worst_auc =
                worst_auc.max((pair_auc(&scores, &labels_of(&test)).ok_or("single-class test")? - rec.auc).abs());
        }
        let a = &r.aggregate;
        if (a.first_test_period, a.last_test_period, a.periods) != (11, 20, 10) {
            problems.push(format!("{}: aggregate window {a:?}", r.strategy));
        }
        let mut sum = 0.0;
        for rec in &r.records {
            sum += rec.auc;
        }
        let mean = sum / r.records.len() as f64;
        worst_mean = worst_mean.max((a.mean_auc.unwrap_or(f64::NAN) - mean).abs());
    }
    let results: Vec<ExperimentResult> = run.outcomes.iter().map(|o| o.result.clone()).collect();
    let table = render_comparison(&results);
    let rows: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap_or("")).collect();
    if rows != TABLE_ROWS {
        problems.push(format!("table rows {rows:?}"));
    }
    let pass = problems.is_empty() && worst_mean <= 1e-15 && worst_auc <= 1e-12;
    Ok((
        pass,
        format!(
            "updates t=10..19 tested on t+1, aggregate gap {worst_mean:.1e} (tol 1e-15), recomputed AUC gap {worst_auc:.1e}, rows {}{}",
            rows.join(" | "),
            if problems.is_empty() { String::new() } else { format!("; problems: {problems:?}") }
        ),
    ))
}

fn same_bytes(a: &AdapterSet<f64>, b: &AdapterSet<f64>) -> Result<bool, String> {
    Ok(a.bits_eq(b) && encode_adapter_set(a).map_err(err)? == encode_adapter_set(b).map_err(err)?)
}

fn c12_coincidences(slot: &mut Option<FullRun>) -> Outcome {
    let run = need(slot)?;
    let (stream, base, cfg, seed) = (&run.stream, &run.base, &run.config, 0);
    let full1 = run_full_retrain(stream, base, 1, cfg, seed).map_err(err)?.adapters;
    let short1 = run_short_term(stream, base, 1, cfg, seed).map_err(err)?.adapters;
    let tuned1 = run_fine_tune(stream, base, 1, None, cfg, seed).map_err(err)?.adapters;
    let first = same_bytes(&full1, &short1)? && same_bytes(&full1, &tuned1)?;

    let full_spec = StrategySpec::new(StrategyKind::LsatEnsemble, LongTermMode::RetrainEveryPeriod);
    let mut direct = 0usize;
    for t in [3, 12] {
        let mut store = LongTermStore::new(None);
        let lsat = run_lsat_period(stream, base, t, full_spec, &mut store, cfg, seed).map_err(err)?;
        let retrained = run_full_retrain(stream, base, t, cfg, seed).map_err(err)?.adapters;
        if same_bytes(lsat.long_term.as_ref().ok_or("missing long-term adapter")?, &retrained)? {
            direct += 1;
        }
    }
    let by_label = |label: &str| run.outcomes.iter().find(|o| o.result.strategy == label);
    let fr = by_label("Full Retraining").ok_or("missing Full Retraining run")?;
    let en_full = by_label("LSAT-EN (full)").ok_or("missing LSAT-EN (full) run")?;
    let mut scheduled = 0usize;
    for (a, b) in fr.result.records.iter().zip(&en_full.result.records) {
        if a.period == b.period && a.adapter_digest.is_some() && a.adapter_digest == b.long_digest {
            scheduled += 1;
        }
    }
    Ok((
        first && direct == 2 && scheduled == 10,
        format!(
            "FullRetrain@1 == ShortTerm@1 == FineTune@1: {first}; retrain-every long-term == FullRetrain at t=3,12: {direct}/2, over the schedule: {scheduled}/10"
        ),
    ))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut run: Option<FullRun> = None;
    type Check<'a> = (u8, &'a str, Box<dyn FnMut(&mut Option<FullRun>) -> Outcome + 'a>);
    let checks: Vec<Check> = vec![
        (1, "gradient correctness", Box::new(|_| c1_gradients())),
        (2, "merge equivalence", Box::new(|_| c2_merge())),
        (3, "fusion exactness", Box::new(|_| c3_fusion())),
        (4, "ensemble law", Box::new(|_| c4_ensemble())),
        (5, "AUC correctness", Box::new(|_| c5_auc())),
        (6, "frozen-base invariance", Box::new(|_| c6_frozen_base())),
        (7, "determinism", Box::new(c7_determinism)),
        (8, "validation dominance", Box::new(c8_dominance)),
        (9, "forgetting effect", Box::new(|_| c9_forgetting())),
        (10, "cold-item effect", Box::new(|_| c10_cold_items())),
        (11, "protocol fidelity", Box::new(c11_protocol)),
        (12, "definitional coincidences", Box::new(c12_coincidences)),
    ];
    let mut failed = 0;
    for (id, title, mut check) in checks {
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| check(&mut run))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let (pass, detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {id:>2}. {title}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/12 passed in {:.0}s", 12 - failed, started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
