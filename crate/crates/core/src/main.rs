use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use forgetbench::data::{load_clinc150, prepare, save_prepared, PrepareOptions};
use forgetbench::report::{generate_report, ReportFormat};
use forgetbench::trainer::{
    load_data, run_cell, run_grid, CellOutcome, ExperimentConfig, GridConfig,
};

/// Continual intent-classification benchmark.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a CLINC150-format corpus into a cached task sequence.
    Prepare(PrepareArgs),
    /// Train one cell (--config) or a grid of cells (--grid).
    Run(RunArgs),
    /// Summarize finished runs into tables and curve charts.
    Report(ReportArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Path to data_full.json.
    #[arg(long, env = "FORGETBENCH_DATA")]
    data: PathBuf,
    /// Seed for the label-to-task partition.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of tasks; must divide the number of intents.
    #[arg(long, default_value_t = 10)]
    tasks: usize,
    /// Output directory for the task cache.
    #[arg(long)]
    out: PathBuf,
    /// Keep only the first N training utterances of each intent.
    #[arg(long)]
    subset_per_class: Option<usize>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Target {
    /// Single experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid config (JSON) expanded to the cross product of its lists.
    #[arg(long)]
    grid: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    target: Target,
    /// Retrain cells that already have a complete record.
    #[arg(long)]
    force: bool,
    /// Cells trained in parallel for a grid.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding one subdirectory per run.
    #[arg(long)]
    runs: PathBuf,
    /// Output directory for the report.
    #[arg(long)]
    out: PathBuf,
    /// Write only this format (csv, json or svg); all three by default.
    #[arg(long)]
    format: Option<ReportFormat>,
}

fn cmd_prepare(a: PrepareArgs) -> anyhow::Result<()> {
    let raw = load_clinc150(&a.data)?;
    let opts = PrepareOptions {
        num_tasks: a.tasks,
        seed: a.seed,
        subset_per_class: a.subset_per_class,
        ..PrepareOptions::default()
    };
    let prepared = prepare(&raw, &opts)?;
    let manifest = save_prepared(&a.out, &prepared)?;
    println!(
        "{} tasks, {} labels, vocabulary {} ({}), written to {}",
        manifest.num_tasks,
        manifest.num_labels,
        manifest.vocab_size,
        &manifest.vocab_hash[..12],
        a.out.display()
    );
    for (i, c) in manifest.counts.iter().enumerate() {
        println!(
            "task {:2}: train {} val {} test {}",
            i + 1,
            c.train,
            c.val,
            c.test
        );
    }
    Ok(())
}

fn print_outcome(o: &CellOutcome) {
    let m = &o.record.metrics;
    let bwt = m
        .avg_bwt_acc
        .map(|v| format!("{v:.4}"))
        .unwrap_or_else(|| "-".into());
    println!(
        "{}: AA {:.4} AF1 {:.4} avg BWT acc {} ({} steps)",
        o.record.config.cell_id(),
        m.aa,
        m.af1,
        bwt,
        o.trained_steps
    );
}

fn cmd_run(a: RunArgs) -> anyhow::Result<()> {
    let outcomes = if let Some(path) = &a.target.config {
        let cfg = ExperimentConfig::from_file(path)?;
        let data =
            load_data(&cfg).with_context(|| format!("loading {}", cfg.data_dir.display()))?;
        vec![run_cell(&cfg, &data, a.force)?]
    } else {
        let path = a
            .target
            .grid
            .as_ref()
            .expect("clap requires --config or --grid");
        let grid = GridConfig::from_file(path)?;
        run_grid(&grid, a.force, a.jobs)?
    };
    for o in &outcomes {
        print_outcome(o);
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> anyhow::Result<()> {
    let formats: Vec<ReportFormat> = a.format.into_iter().collect();
    let bundle = generate_report(&a.runs, &a.out, &formats)?;
    for p in &bundle.skipped {
        eprintln!("skipped incomplete run {}", p.display());
    }
    println!(
        "{} cells reported to {}",
        bundle.rows.len(),
        a.out.display()
    );
    for b in &bundle.best {
        println!(
            "best {}: {} (AA {:.4}, AF1 {:.4})",
            b.architecture, b.strategies, b.aa, b.af1
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<forgetbench::Error>()
                .map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
