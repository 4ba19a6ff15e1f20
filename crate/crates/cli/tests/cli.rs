use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lsat_core::eval::ExperimentResult;
use lsat_core::model::{load_base, BaseParams};

const SMALL: &str = r#"
[synthetic]
users = 100
items = 50
periods = 5
period_size = 200

[pretrain.train]
epochs = 2

[strategy]
m = 2

[strategy.train]
epochs = 2
"#;

fn lsat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsat"))
        .args(args)
        .current_dir(dir)
        .env_remove("LSAT_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn with_config(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), text).unwrap();
    dir
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn prepare_and_pretrain(dir: &Path, out: &str) {
    for cmd in ["prepare", "pretrain"] {
        let o = lsat(dir, &["--config", "cfg.toml", "--out", out, cmd]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
}

#[test]
fn selftest_passes_and_an_injected_fault_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = lsat(dir.path(), &["selftest"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(!stdout(&ok).contains("[FAIL]"));
    let bad = lsat(dir.path(), &["selftest", "--inject-fault"]);
    assert_eq!(bad.status.code(), Some(3));
    let failing: Vec<String> = stdout(&bad).lines().filter(|l| l.starts_with("[FAIL]")).map(String::from).collect();
    assert_eq!(failing.len(), 1, "{failing:?}");
    assert!(failing[0].contains("gradient") && failing[0].contains("tol"));
}

#[test]
fn invalid_configuration_lists_every_problem() {
    let dir = with_config("seeds = []\n[strategy]\nrank = 0\n[synthetic]\nitems = 0\n");
    let o = lsat(dir.path(), &["--config", "cfg.toml", "prepare", "--synthetic"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for needle in ["seeds", "rank", "items", "3 problems"] {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
    let typo = with_config("[strategy]\nrnak = 4\n");
    assert_eq!(lsat(typo.path(), &["--config", "cfg.toml", "pretrain"]).status.code(), Some(1));
    assert_eq!(lsat(typo.path(), &["no-such-command"]).status.code(), Some(1));
}

#[test]
fn prepare_is_byte_stable_and_summarizes_the_stream() {
    let dir = tempfile::tempdir().unwrap();
    let first = lsat(dir.path(), &["--out", "a", "prepare", "--synthetic"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let second = lsat(dir.path(), &["--out", "b", "prepare", "--synthetic"]);
    assert!(second.status.success());
    let read = |d: &str| fs::read(dir.path().join(d).join("dataset.txt")).unwrap();
    assert_eq!(read("a"), read("b"));
    let summary = stdout(&first);
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "synthetic");
    assert_eq!(row[5], "20");
    assert_eq!(row[3], "20000");
}

#[test]
fn raw_parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ratings.dat"), "1::2::4::100\n1::x::4::101\n").unwrap();
    let o = lsat(dir.path(), &["prepare", "--dataset", "ratings.dat"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    let missing = lsat(dir.path(), &["prepare", "--dataset", "absent.dat"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn pretrain_needs_a_prepared_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let o = lsat(dir.path(), &["pretrain"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("prepare"));
}

#[test]
fn output_root_comes_from_the_environment_unless_flagged() {
    let dir = with_config(SMALL);
    let run = |extra: &[&str]| {
        let mut args = vec!["--config", "cfg.toml"];
        args.extend_from_slice(extra);
        args.push("prepare");
        Command::new(env!("CARGO_BIN_EXE_lsat"))
            .args(&args)
            .current_dir(dir.path())
            .env("LSAT_OUT", "from-env")
            .output()
            .unwrap()
    };
    assert!(run(&[]).status.success());
    assert!(dir.path().join("from-env/dataset.txt").is_file());
    assert!(run(&["--out", "from-flag"]).status.success());
    assert!(dir.path().join("from-flag/dataset.txt").is_file());
}

#[test]
fn printed_base_hash_matches_the_checkpoint() {
    let dir = with_config(SMALL);
    assert!(lsat(dir.path(), &["--config", "cfg.toml", "--out", "o", "prepare"]).status.success());
    let o = lsat(dir.path(), &["--config", "cfg.toml", "--out", "o", "--seed", "3", "pretrain"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed = stdout(&o).split_whitespace().nth(3).unwrap().to_string();
    let base: BaseParams<f64> = load_base(dir.path().join("o/base-seed3.lsat")).unwrap();
    assert_eq!(base.content_hash(), printed);
    let again = lsat(dir.path(), &["--config", "cfg.toml", "--out", "o", "--seed", "3", "pretrain"]);
    assert_eq!(stdout(&again), stdout(&o));
}

#[test]
fn run_writes_results_and_resume_is_a_no_op() {
    let dir =
        with_config(&format!("strategies = [\"full_retrain\", \"fine_tune\", \"lsat_en\", \"lsat_ta\"]\n{SMALL}"));
    prepare_and_pretrain(dir.path(), "o");
    let o = lsat(dir.path(), &["--config", "cfg.toml", "--out", "o", "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let results: Vec<_> = fs::read_dir(dir.path().join("o/results")).unwrap().collect();
    assert_eq!(results.len(), 4);
    assert!(dir.path().join("o/report/comparison.csv").is_file());
    assert_eq!(fs::read_dir(dir.path().join("o/timing")).unwrap().count(), 4);

    let before = snapshot(&dir.path().join("o"));
    let again = lsat(dir.path(), &["--config", "cfg.toml", "--out", "o", "run", "--resume"]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(snapshot(&dir.path().join("o")), before);

    let changed = lsat(dir.path(), &["--config", "cfg.toml", "--out", "o", "run", "--resume", "--grid", "0,0.5,1"]);
    assert_eq!(changed.status.code(), Some(1));
    assert!(stderr(&changed).contains("different configuration"));
}

#[test]
fn all_table_rows_in_order_and_runs_are_deterministic() {
    let dir = with_config(SMALL);
    for out in ["a", "b"] {
        prepare_and_pretrain(dir.path(), out);
        let o = lsat(dir.path(), &["--config", "cfg.toml", "--out", out, "run"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let strip_timing = |mut m: BTreeMap<String, Vec<u8>>| {
        m.retain(|k, _| !k.starts_with("timing"));
        m
    };
    let (a, b) = (snapshot(&dir.path().join("a")), snapshot(&dir.path().join("b")));
    assert_eq!(a.len(), b.len());
    assert_eq!(strip_timing(a), strip_timing(b));
    let table = fs::read_to_string(dir.path().join("a/report/comparison.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        rows,
        [
            "Full Retraining",
            "Fine-tuning",
            "Short-term LoRA",
            "Long-term LoRA",
            "LSAT-TA (2)",
            "LSAT-EN (full)",
            "LSAT-EN (2)"
        ]
    );
    let report = lsat(dir.path(), &["--out", "a", "report"]);
    assert!(report.status.success());
    assert_eq!(stdout(&report), table);
}

#[test]
fn flags_override_the_file() {
    let dir = with_config(&format!("strategies = [\"short_term\"]\n{SMALL}"));
    prepare_and_pretrain(dir.path(), "o");
    let o = lsat(
        dir.path(),
        &["--config", "cfg.toml", "--out", "o", "run", "--rank", "2", "--fusion-mode", "factor_interp"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = ExperimentResult::load(dir.path().join("o/results/short_term-seed0.json")).unwrap();
    assert_eq!(r.config["settings"]["rank"], 2);
    assert_eq!(r.fusion_mode, "factor_interp");
    let moved = lsat(dir.path(), &["--config", "cfg.toml", "--out", "o", "--m", "3", "run"]);
    assert_eq!(moved.status.code(), Some(1), "base pretrained for m = 2 must not serve m = 3");
}

#[test]
fn a_failing_run_is_recorded_and_exits_with_runtime_status() {
    let dir = with_config(&format!("strategies = [\"full_retrain\", \"short_term\"]\n{SMALL}"));
    prepare_and_pretrain(dir.path(), "o");
    let o = lsat(dir.path(), &["--config", "cfg.toml", "--out", "o", "run", "--rank", "1000"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("2 run(s) failed") && err.contains("period 2"), "{err}");
}

#[test]
fn filter_order_decides_which_events_count_toward_activity() {
    let mut log = String::new();
    for k in 0..12 {
        log.push_str(&format!("1::{}::5::{}\n", k + 1, if k < 6 { 100 + k } else { 1000 + k }));
    }
    for user in 2..=4 {
        for k in 0..10 {
            log.push_str(&format!("{user}::{}::{}::{}\n", k + 1, 1 + k % 5, 1100 + user * 10 + k));
        }
    }
    let instances = |order: &str| {
        let dir = with_config(&format!(
            "[data]\nsource = \"raw\"\npath = \"r.dat\"\nstart = 1000\nfilter_order = \"{order}\"\nperiods = {{ size = 12 }}\n"
        ));
        fs::write(dir.path().join("r.dat"), &log).unwrap();
        let o = lsat(dir.path(), &["--config", "cfg.toml", "prepare"]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o).lines().nth(1).unwrap().split(',').nth(3).unwrap().to_string()
    };
    assert_eq!(instances("users_first"), "36");
    assert_eq!(instances("window_first"), "24");
}
