//! A small experiment grid end to end: task cache, cells run in parallel,
//! then the summary tables and curve charts.
//!
//! ```text
//! cargo run --release --example report_grid -- [work_dir]
//! ```

use std::path::PathBuf;

use forgetbench::data::synthetic::{generate, SyntheticSpec};
use forgetbench::data::{parse_clinc150, prepare, save_prepared, PrepareOptions};
use forgetbench::report::generate_report;
use forgetbench::trainer::{run_grid, GridConfig};
use serde_json::json;

fn main() -> anyhow::Result<()> {
    let work = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "target/report_grid".into()),
    );
    let spec = SyntheticSpec {
        intents: 12,
        train_per_intent: 30,
        val_per_intent: 8,
        test_per_intent: 12,
        oos: [0, 0, 0],
        ..SyntheticSpec::default()
    };
    let opts = PrepareOptions {
        num_tasks: 4,
        ..PrepareOptions::default()
    };
    let data = prepare(&parse_clinc150(&generate(&spec))?, &opts)?;
    save_prepared(&work.join("tasks"), &data)?;

    let grid: GridConfig = serde_json::from_value(json!({
        "architectures": ["ann", "gru", "transformer"],
        "strategies": ["joint", "naive", "lwf", "mir", "mir+hat"],
        "seeds": [1],
        "hyperparameters": {
            "optimizer": "adam",
            "learning_rate": 0.005,
            "batch_size": 16,
            "max_epochs": 8,
            "embed_dim": 24,
            "hidden_dim": 32,
            "num_layers": 1,
            "capacity": 100
        },
        "data_dir": work.join("tasks"),
        "out_dir": work.join("runs"),
    }))?;
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    for o in run_grid(&grid, false, jobs)? {
        println!(
            "{:<28} AA {:.4}",
            o.record.config.cell_id(),
            o.record.metrics.aa
        );
    }

    let out = work.join("report");
    let bundle = generate_report(&work.join("runs"), &out, &[])?;
    print!("\n{}", bundle.best_csv());
    println!(
        "\nreport with {} cells written to {}",
        bundle.rows.len(),
        out.display()
    );
    Ok(())
}
