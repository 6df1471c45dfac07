#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn fixture_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/smoke_corpus.json")
}

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_forgetbench"));
    c.env_remove("FORGETBENCH_DATA").env("RUST_LOG", "warn");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(o),
        stderr(o)
    );
}

/// Prepares the committed fixture corpus as three tasks of five intents.
pub fn prepare_fixture(dir: &Path) -> PathBuf {
    let tasks = dir.join("tasks");
    let o = run(&[
        "prepare",
        "--data",
        fixture_corpus().to_str().unwrap(),
        "--tasks",
        "3",
        "--seed",
        "5",
        "--out",
        tasks.to_str().unwrap(),
    ]);
    assert_ok(&o);
    tasks
}

/// Hyperparameters small enough for a few-second cell.
pub fn small_hyperparameters() -> Value {
    json!({
        "optimizer": "adam",
        "learning_rate": 0.01,
        "batch_size": 16,
        "max_epochs": 5,
        "patience": 2,
        "embed_dim": 16,
        "hidden_dim": 16,
        "num_layers": 1,
        "num_heads": 2,
        "capacity": 60,
        "eval_batch_size": 64
    })
}

pub fn write_json(path: &Path, v: &Value) -> PathBuf {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}

pub fn subdirs(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}
