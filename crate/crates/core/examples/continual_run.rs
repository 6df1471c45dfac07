//! Sequential training on a synthetic five-task sequence, with and without
//! continual learning strategies.
//!
//! ```text
//! cargo run --release --example continual_run -- [architecture] [strategies]
//! cargo run --release --example continual_run -- gru mir+lwf
//! ```

use forgetbench::autograd::OptimizerKind;
use forgetbench::data::synthetic::{generate, SyntheticSpec};
use forgetbench::data::{parse_clinc150, prepare, PrepareOptions};
use forgetbench::metrics::Metric;
use forgetbench::models::Architecture;
use forgetbench::strategies::StrategySet;
use forgetbench::trainer::{train_joint, train_sequential, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let arch: Architecture =
        serde_json::from_value(args.next().unwrap_or_else(|| "ann".into()).into())?;
    let chosen: StrategySet = args.next().unwrap_or_else(|| "mir+hat".into()).parse()?;

    let spec = SyntheticSpec {
        intents: 25,
        train_per_intent: 40,
        val_per_intent: 10,
        test_per_intent: 20,
        oos: [0, 0, 0],
        ..SyntheticSpec::default()
    };
    let opts = PrepareOptions {
        num_tasks: 5,
        ..PrepareOptions::default()
    };
    let data = prepare(&parse_clinc150(&generate(&spec))?, &opts)?;

    let config = |set: StrategySet| {
        let mut c = ExperimentConfig::new(arch, set, "unused".into(), "unused".into());
        let h = &mut c.hyperparameters;
        h.optimizer = OptimizerKind::Adam;
        h.learning_rate = 3e-3;
        h.embed_dim = 32;
        h.hidden_dim = 128;
        h.num_layers = 1;
        h.max_epochs = 30;
        h.capacity = 200;
        c
    };

    for set in [StrategySet::naive(), chosen] {
        let rec = train_sequential(&config(set.clone()), &data, None)?;
        println!("== {arch} / {set}");
        print!("{}", rec.matrix.to_csv(Metric::Accuracy));
        let m = &rec.metrics;
        println!(
            "AA {:.4}  AF1 {:.4}  BWT acc {:+.4}  avg BWT acc {:+.4}\n",
            m.aa,
            m.af1,
            m.bwt_acc.unwrap_or(f64::NAN),
            m.avg_bwt_acc.unwrap_or(f64::NAN)
        );
    }

    let mut joint = config(StrategySet::naive());
    joint.joint = true;
    let rec = train_joint(&joint, &data, None)?;
    println!(
        "== {arch} / joint upper bound: accuracy {:.4}",
        rec.metrics.aa
    );
    Ok(())
}
