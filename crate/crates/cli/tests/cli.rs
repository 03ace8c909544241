use std::path::Path;
use std::process::{Command, Output};

fn optlist(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optlist"))
        .current_dir(dir)
        .env_remove("OPTLIST_STORE")
        .args(args)
        .output()
        .expect("spawn optlist")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = optlist(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small store: 2 tasks, 3 optimizers, 2 seeds.
fn small_store(dir: &Path) {
    ok(
        dir,
        &[
            "sample-tasks",
            "--family",
            "quadratic_like",
            "--count",
            "2",
            "--seed",
            "4",
            "--out",
            "t.jsonl",
        ],
    );
    ok(
        dir,
        &[
            "sample-optimizers",
            "--family",
            "adam8p",
            "--count",
            "3",
            "--seed",
            "4",
            "--out",
            "o.jsonl",
        ],
    );
    ok(
        dir,
        &[
            "evaluate",
            "--tasks",
            "t.jsonl",
            "--opts",
            "o.jsonl",
            "--seeds",
            "2",
            "--steps",
            "60",
            "--eval-every",
            "20",
            "--eval-batches",
            "2",
            "--store",
            "st",
        ],
    );
}

#[test]
fn sampling_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.jsonl", "b.jsonl"] {
        ok(
            dir.path(),
            &[
                "sample-tasks",
                "--family",
                "all",
                "--count",
                "11",
                "--seed",
                "9",
                "--out",
                out,
            ],
        );
    }
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 11);
}

#[test]
fn zero_count_writes_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "sample-optimizers",
            "--family",
            "nadamw",
            "--count",
            "0",
            "--out",
            "z.jsonl",
        ],
    );
    assert_eq!(std::fs::read(dir.path().join("z.jsonl")).unwrap().len(), 0);
}

#[test]
fn unknown_family_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = optlist(
        dir.path(),
        &["sample-tasks", "--family", "nope", "--count", "1", "--out", "x.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = optlist(dir.path(), &["sample-tasks", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_task_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "{\"family\":\"quadratic_like\"}\n").unwrap();
    ok(
        dir.path(),
        &[
            "sample-optimizers",
            "--family",
            "adam1p",
            "--count",
            "1",
            "--out",
            "o.jsonl",
        ],
    );
    let out = optlist(
        dir.path(),
        &["evaluate", "--tasks", "bad.jsonl", "--opts", "o.jsonl", "--store", "st"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:1"));
}

#[test]
fn evaluate_resumes_and_missing_seeds_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    small_store(dir.path());
    let again = ok(
        dir.path(),
        &[
            "evaluate",
            "--tasks",
            "t.jsonl",
            "--opts",
            "o.jsonl",
            "--seeds",
            "2",
            "--steps",
            "60",
            "--eval-every",
            "20",
            "--eval-batches",
            "2",
            "--store",
            "st",
        ],
    );
    assert!(again.contains("skipped 12 existing"), "{again}");
    let out = optlist(dir.path(), &["learn-list", "--store", "st", "--k", "2", "--seeds", "3"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
}

#[test]
fn learn_and_eval_list() {
    let dir = tempfile::tempdir().unwrap();
    small_store(dir.path());
    let table = ok(
        dir.path(),
        &["learn-list", "--store", "st", "--k", "2", "--out", "list.json"],
    );
    assert_eq!(table.lines().count(), 3);
    let out = ok(
        dir.path(),
        &[
            "eval-list",
            "--store",
            "st",
            "--list",
            "list.json",
            "--out",
            "curve.csv",
        ],
    );
    assert_eq!(out.lines().count(), 3);
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    // best-of-k validation cost never increases
    assert!(rows[1][1] <= rows[0][1]);
}

#[test]
fn store_env_var_is_used() {
    let dir = tempfile::tempdir().unwrap();
    small_store(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_optlist"))
        .current_dir(dir.path())
        .env("OPTLIST_STORE", "st")
        .args(["export-features", "--out", "f.csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn experiment_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    small_store(dir.path());
    for out_dir in ["r1", "r2"] {
        ok(
            dir.path(),
            &[
                "experiment",
                "--name",
                "normalization_ablation",
                "--store",
                "st",
                "--resamples",
                "3",
                "--out-dir",
                out_dir,
            ],
        );
    }
    for file in ["normalization_ablation.csv", "normalization_ablation.json"] {
        let a = std::fs::read(dir.path().join("r1").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
    assert!(dir.path().join("r1/normalization_ablation.timing.json").exists());
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"family":"adam4p","count":2,"seed":3}"#).unwrap();
    ok(
        dir.path(),
        &["sample-optimizers", "--config", "cfg.json", "--out", "a.jsonl"],
    );
    ok(
        dir.path(),
        &[
            "sample-optimizers",
            "--config",
            "cfg.json",
            "--count",
            "3",
            "--out",
            "b.jsonl",
        ],
    );
    let a = std::fs::read_to_string(dir.path().join("a.jsonl")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a.lines().count(), 2);
    assert_eq!(b.lines().count(), 3);
    assert!(b.starts_with(&a));
    std::fs::write(dir.path().join("bad.json"), r#"{"famly":"adam4p"}"#).unwrap();
    let out = optlist(
        dir.path(),
        &["sample-optimizers", "--config", "bad.json", "--out", "c.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn worker_count_does_not_change_store_hash() {
    let dir = tempfile::tempdir().unwrap();
    small_store(dir.path());
    let hash = |out: &str| {
        out.lines()
            .find_map(|l| l.strip_prefix("store hash "))
            .unwrap()
            .to_string()
    };
    let mut hashes = Vec::new();
    for workers in ["1", "3"] {
        let out = ok(
            dir.path(),
            &[
                "evaluate",
                "--tasks",
                "t.jsonl",
                "--opts",
                "o.jsonl",
                "--seeds",
                "2",
                "--steps",
                "60",
                "--eval-every",
                "20",
                "--eval-batches",
                "2",
                "--store",
                workers,
                "--workers",
                workers,
            ],
        );
        hashes.push(hash(&out));
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn sampled_nadamw_fields_are_in_range() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "sample-optimizers",
            "--family",
            "nadamw",
            "--count",
            "4",
            "--seed",
            "9",
            "--out",
            "n.jsonl",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("n.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 4);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let h = &v["hparams"];
        let f = |k: &str| h[k].as_f64().unwrap();
        assert!(f("lr") > 0.0);
        assert!((0.0..1.0).contains(&f("beta1")) && (0.0..1.0).contains(&f("beta2")));
        assert!(f("epsilon") >= 0.0 && f("l2_wd") >= 0.0 && f("l2_adamw") >= 0.0);
        assert!((0.0..=1.0).contains(&f("warmup")) && (0.0..=1.0).contains(&f("constant")));
        assert!(f("min_lr_mult") >= 0.0);
        assert!(h["use_nesterov"].is_boolean());
    }
}
