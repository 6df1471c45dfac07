mod common;

use std::path::Path;

use common::*;
use forgetbench::data::synthetic::{self, SyntheticSpec};
use serde_json::{json, Value};

#[test]
fn prepare_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = prepare_fixture(dir.path());
    let first = std::fs::read(tasks.join("manifest.json")).unwrap();
    let again = prepare_fixture(dir.path());
    assert_eq!(std::fs::read(again.join("manifest.json")).unwrap(), first);
    let m: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(m["num_tasks"], 3);
    assert_eq!(m["label_sets"][0].as_array().unwrap().len(), 5);
}

#[test]
fn prepare_splits_full_size_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("data_full.json");
    synthetic::write(&SyntheticSpec::default(), &corpus).unwrap();
    let out = dir.path().join("t3");
    // The data path comes from the environment variable here.
    let o = bin()
        .env("FORGETBENCH_DATA", &corpus)
        .args([
            "prepare",
            "--tasks",
            "3",
            "--out",
            out.to_str().unwrap(),
            "--subset-per-class",
            "10",
        ])
        .output()
        .unwrap();
    assert_ok(&o);
    let m: Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    for (labels, counts) in m["label_sets"]
        .as_array()
        .unwrap()
        .iter()
        .zip(m["counts"].as_array().unwrap())
    {
        assert_eq!(labels.as_array().unwrap().len(), 50);
        assert_eq!(counts["train"], 50 * 10);
        assert_eq!(counts["test"], 50 * 30);
    }

    let out10 = dir.path().join("t10");
    let o = run(&[
        "prepare",
        "--data",
        corpus.to_str().unwrap(),
        "--out",
        out10.to_str().unwrap(),
        "--subset-per-class",
        "10",
    ]);
    assert_ok(&o);
    let m: Value =
        serde_json::from_slice(&std::fs::read(out10.join("manifest.json")).unwrap()).unwrap();
    for c in m["counts"].as_array().unwrap() {
        assert_eq!(c["train"], 15 * 10);
    }
}

#[test]
fn prepare_reports_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = run(&[
        "prepare",
        "--data",
        "/nonexistent/data_full.json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"train\": [").unwrap();
    let o = run(&[
        "prepare",
        "--data",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["prepare", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--data"));
}

fn grid(dir: &Path, tasks: &Path, strategies: Value) -> std::path::PathBuf {
    write_json(
        &dir.join("grid.json"),
        &json!({
            "architectures": ["ann"],
            "strategies": strategies,
            "seeds": [3],
            "hyperparameters": small_hyperparameters(),
            "data_dir": tasks,
            "out_dir": dir.join("runs"),
        }),
    )
}

#[test]
fn grid_run_skip_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = prepare_fixture(dir.path());
    let g = grid(dir.path(), &tasks, json!(["naive", "mir"]));
    let o = run(&["run", "--grid", g.to_str().unwrap(), "--jobs", "2"]);
    assert_ok(&o);
    let runs = dir.path().join("runs");
    assert_eq!(subdirs(&runs), vec!["ann__mir__seed3", "ann__naive__seed3"]);
    let acc = std::fs::read(runs.join("ann__mir__seed3/r_acc.csv")).unwrap();

    let o = run(&["run", "--grid", g.to_str().unwrap()]);
    assert_ok(&o);
    assert_eq!(stdout(&o).matches("(0 steps)").count(), 2, "{}", stdout(&o));

    let o = run(&["run", "--grid", g.to_str().unwrap(), "--force"]);
    assert_ok(&o);
    assert_eq!(stdout(&o).matches("(0 steps)").count(), 0);
    assert_eq!(
        std::fs::read(runs.join("ann__mir__seed3/r_acc.csv")).unwrap(),
        acc
    );

    let report = dir.path().join("report");
    let o = run(&[
        "report",
        "--runs",
        runs.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_ok(&o);
    let summary = std::fs::read_to_string(report.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(report.join("curves/ann__mir__seed3.svg").is_file());
    let best: Value =
        serde_json::from_slice(&std::fs::read(report.join("best.json")).unwrap()).unwrap();
    assert_eq!(best.as_array().unwrap().len(), 1);

    // A run without metrics.json is listed and skipped.
    std::fs::remove_file(runs.join("ann__naive__seed3/metrics.json")).unwrap();
    let report2 = dir.path().join("report2");
    let o = run(&[
        "report",
        "--runs",
        runs.to_str().unwrap(),
        "--out",
        report2.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_ok(&o);
    assert!(stderr(&o).contains("ann__naive__seed3"), "{}", stderr(&o));
    let rows: Value =
        serde_json::from_slice(&std::fs::read(report2.join("summary.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 1);
    assert!(!report2.join("summary.csv").exists());
}

#[test]
fn single_config_run() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = prepare_fixture(dir.path());
    let cfg = write_json(
        &dir.path().join("cell.json"),
        &json!({
            "architecture": "transformer",
            "strategies": ["lwf"],
            "seed": 9,
            "hyperparameters": small_hyperparameters(),
            "data_dir": tasks,
            "out_dir": dir.path().join("runs"),
        }),
    );
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_ok(&o);
    assert!(stdout(&o).starts_with("transformer__lwf__seed9: AA"));
    let m: Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("runs/transformer__lwf__seed9/metrics.json")).unwrap(),
    )
    .unwrap();
    for k in [
        "aa",
        "af1",
        "bwt_acc",
        "bwt_f1",
        "avg_bwt_acc",
        "avg_bwt_f1",
    ] {
        assert!(m[k].is_f64(), "{k}");
    }
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let base = json!({
        "architecture": "ann",
        "strategies": ["mir"],
        "data_dir": "tasks",
        "out_dir": "runs",
    });
    let mut unknown_strategy = base.clone();
    unknown_strategy["strategies"] = json!(["mir", "ewc"]);
    let p = write_json(&dir.path().join("a.json"), &unknown_strategy);
    let o = run(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mir, lwf, hat"), "{}", stderr(&o));

    let mut unknown_key = base.clone();
    unknown_key["hyperparameters"] = json!({"learning_rat": 0.1});
    let p = write_json(&dir.path().join("b.json"), &unknown_key);
    let o = run(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rat"));

    let o = run(&["run"]);
    assert!(!o.status.success());
    let o = run(&[
        "report",
        "--runs",
        "/nonexistent",
        "--out",
        dir.path().to_str().unwrap(),
        "--format",
        "png",
    ]);
    assert!(!o.status.success());
}

#[test]
fn missing_cache_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_json(
        &dir.path().join("c.json"),
        &json!({"architecture": "gru", "data_dir": dir.path().join("none"), "out_dir": dir.path().join("runs")}),
    );
    let o = run(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
