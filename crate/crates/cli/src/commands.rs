use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use lsat_core::eval::{emit_report, json_digest, render_comparison, ExperimentResult};
use lsat_core::model::{load_base, save_base, BaseParams};
use lsat_core::strategy::{pretrain_for_stream, result_config, run_schedule, RunContext};
use lsat_core::stream::{
    filter_time_range, filter_users, ingest, periodize, read_dataset, synth_drift, write_dataset, PeriodizedStream,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{FilterOrder, RunConfig, Source};
use crate::CliError;

const DATASET_FILE: &str = "dataset.txt";
const SUMMARY_FILE: &str = "summary.csv";
const BASE_META_FORMAT: &str = "lsat-base-meta/1";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn build_stream(cfg: &RunConfig) -> Result<PeriodizedStream, CliError> {
    let d = &cfg.data;
    match d.source {
        Source::Synthetic => Ok(synth_drift(&cfg.synthetic)?),
        Source::Raw => {
            let path = d.path.as_ref().ok_or_else(|| CliError::Usage("no raw dataset path given".into()))?;
            if !path.is_file() {
                return Err(CliError::Usage(format!("raw dataset {} does not exist", path.display())));
            }
            let raw = ingest(path, &d.format)?;
            let read = raw.len();
            let kept = match d.filter_order {
                FilterOrder::UsersFirst => {
                    filter_time_range(filter_users(raw, d.min_user_interactions), d.start, d.end)
                }
                FilterOrder::WindowFirst => {
                    filter_users(filter_time_range(raw, d.start, d.end), d.min_user_interactions)
                }
            };
            info!("read {read} interactions, kept {}", kept.len());
            Ok(periodize(kept, d.periods, d.history_len)?)
        }
    }
}

/// `prepare`: writes `dataset.txt` and a one-row summary.
pub fn prepare(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let stream = build_stream(cfg)?;
    create_dir(&out)?;
    let echo = serde_json::to_string(&cfg.data_echo()).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_dataset(&stream, &echo, out.join(DATASET_FILE))?;
    let s = stream.summary();
    let name = cfg.data.dataset_name();
    let table = format!(
        "dataset,users,items,instances,density,periods\n{name},{},{},{},{},{}\n",
        s.users,
        s.items,
        s.instances,
        s.density_percent(),
        s.periods
    );
    write_text(&out.join(SUMMARY_FILE), &table)?;
    print!("{table}");
    if s.dropped > 0 {
        info!("{} trailing interactions did not fill a period and were dropped", s.dropped);
    }
    info!("wrote {}", out.join(DATASET_FILE).display());
    Ok(())
}

struct Prepared {
    name: String,
    digest: String,
    stream: PeriodizedStream,
}

fn load_prepared(out: &Path) -> Result<Prepared, CliError> {
    let path = out.join(DATASET_FILE);
    let bytes = fs::read(&path)
        .map_err(|_| CliError::Usage(format!("no prepared dataset at {}; run `lsat prepare` first", path.display())))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let file = read_dataset(&path)?;
    let name = serde_json::from_str::<serde_json::Value>(&file.config_echo)
        .ok()
        .and_then(|v| v.get("name").and_then(|n| n.as_str()).map(str::to_string))
        .unwrap_or_else(|| "dataset".into());
    Ok(Prepared { name, digest, stream: file.stream })
}

/// Sidecar of a base checkpoint: what it was trained from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BaseMeta {
    format: String,
    seed: u64,
    m: usize,
    dataset_sha256: String,
    pretrain: serde_json::Value,
    config_hash: String,
    base_hash: String,
}

impl BaseMeta {
    fn expected(cfg: &RunConfig, seed: u64, dataset: &Prepared) -> Result<(serde_json::Value, String), CliError> {
        let pretrain = serde_json::to_value(cfg.pretrain).map_err(|e| CliError::Runtime(e.to_string()))?;
        let key = serde_json::json!({ "seed": seed, "m": cfg.strategy.m, "dataset_sha256": dataset.digest, "pretrain": pretrain });
        Ok((pretrain, json_digest(&key)?))
    }
}

fn base_paths(out: &Path, seed: u64) -> (PathBuf, PathBuf) {
    (out.join(format!("base-seed{seed}.lsat")), out.join(format!("base-seed{seed}.json")))
}

fn check_horizon(cfg: &RunConfig, stream: &PeriodizedStream) -> Result<(), CliError> {
    let v = cfg.strategy.violations(Some(stream.num_periods()));
    if v.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(v.into_iter().map(|s| format!("strategy: {s}")).collect()))
    }
}

/// `pretrain`: one frozen base per seed, with a JSON sidecar.
pub fn pretrain(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let data = load_prepared(&out)?;
    check_horizon(cfg, &data.stream)?;
    for &seed in &cfg.seeds {
        let base = pretrain_for_stream(&data.stream, cfg.strategy.m, &cfg.pretrain, seed)?;
        let (ckpt, meta_path) = base_paths(&out, seed);
        save_base(&base, &ckpt)?;
        let (pretrain, config_hash) = BaseMeta::expected(cfg, seed, &data)?;
        let meta = BaseMeta {
            format: BASE_META_FORMAT.into(),
            seed,
            m: cfg.strategy.m,
            dataset_sha256: data.digest.clone(),
            pretrain,
            config_hash,
            base_hash: base.content_hash(),
        };
        let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
        write_text(&meta_path, &text)?;
        println!("seed {seed}: base {} -> {}", meta.base_hash, ckpt.display());
    }
    Ok(())
}

fn load_checked_base(cfg: &RunConfig, seed: u64, data: &Prepared) -> Result<(BaseParams<f64>, BaseMeta), CliError> {
    let out = cfg.out_dir();
    let (ckpt, meta_path) = base_paths(&out, seed);
    let text = fs::read_to_string(&meta_path).map_err(|_| {
        CliError::Usage(format!("no base checkpoint for seed {seed} in {}; run `lsat pretrain` first", out.display()))
    })?;
    let meta: BaseMeta =
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", meta_path.display())))?;
    let (_, expected) = BaseMeta::expected(cfg, seed, data)?;
    if meta.config_hash != expected {
        return Err(CliError::Usage(format!(
            "base checkpoint for seed {seed} was pretrained under a different configuration (hash {} vs {expected}); rerun `lsat pretrain`",
            meta.config_hash
        )));
    }
    let base: BaseParams<f64> = load_base(&ckpt)?;
    if base.content_hash() != meta.base_hash {
        return Err(CliError::Runtime(format!("{} does not match its recorded hash", ckpt.display())));
    }
    Ok((base, meta))
}

/// `run`: every strategy for every seed, then the report.
pub fn run(cfg: &RunConfig, resume: bool) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let data = load_prepared(&out)?;
    check_horizon(cfg, &data.stream)?;
    let specs = cfg.strategy_specs().map_err(|e| CliError::Validation(vec![e]))?;
    let (results_dir, timing_dir) = (out.join("results"), out.join("timing"));
    create_dir(&results_dir)?;
    create_dir(&timing_dir)?;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &seed in &cfg.seeds {
        let (base, meta) = load_checked_base(cfg, seed, &data)?;
        for &spec in &specs {
            let stem = format!("{}-seed{seed}", spec.name());
            let ctx = RunContext {
                dataset: data.name.clone(),
                seed,
                echo: serde_json::json!({ "dataset_sha256": data.digest, "base_config_hash": meta.config_hash }),
                checkpoint_dir: spec.kind.uses_long_term().then(|| out.join("checkpoints").join(&stem)),
                keep_short_term: false,
            };
            let path = results_dir.join(format!("{stem}.json"));
            if resume && path.exists() {
                let done = ExperimentResult::load(&path)?;
                let expected = json_digest(&result_config(spec, &cfg.strategy, &ctx))?;
                if done.config_hash != expected || done.base_hash != meta.base_hash {
                    return Err(CliError::Usage(format!(
                        "{} was produced under a different configuration (hash {} vs {expected}); refusing to resume",
                        path.display(),
                        done.config_hash
                    )));
                }
                info!("{stem}: up to date, skipped");
                results.push(done);
                continue;
            }
            info!("{stem}: running {}", spec.row_label(cfg.strategy.m));
            match run_schedule(&data.stream, &base, spec, &cfg.strategy, &ctx) {
                Ok(outcome) => {
                    outcome.result.save(&path)?;
                    let timing =
                        serde_json::to_string_pretty(&outcome.timings).map_err(|e| CliError::Runtime(e.to_string()))?;
                    write_text(&timing_dir.join(format!("{stem}.json")), &(timing + "\n"))?;
                    info!("{stem}: mean AUC {:?}", outcome.result.aggregate.mean_auc);
                    results.push(outcome.result);
                }
                Err(e) => {
                    warn!("{stem}: {e}");
                    failures.push(format!("{stem}: {e}"));
                }
            }
        }
    }
    if !results.is_empty() {
        let files = emit_report(&results, out.join("report"))?;
        print!("{}", render_comparison(&results));
        info!("report written to {}", files.comparison.parent().unwrap_or(&out).display());
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{} run(s) failed:\n  {}", failures.len(), failures.join("\n  "))))
    }
}

fn result_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|_| CliError::Usage(format!("no results directory at {}; run `lsat run` first", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// `report`: rebuilds the report directory from result files.
pub fn report(cfg: &RunConfig, paths: &[PathBuf]) -> Result<(), CliError> {
    let out = cfg.out_dir();
    let paths = if paths.is_empty() { result_files(&out.join("results"))? } else { paths.to_vec() };
    let results = paths.iter().map(ExperimentResult::load).collect::<Result<Vec<_>, _>>()?;
    emit_report(&results, out.join("report"))?;
    print!("{}", render_comparison(&results));
    Ok(())
}
