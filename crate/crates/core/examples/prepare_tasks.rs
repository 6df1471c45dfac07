//! Builds a task cache from a CLINC150-format corpus.
//!
//! With `FORGETBENCH_DATA` pointing at `data_full.json` the real corpus is
//! used; otherwise a synthetic corpus of the same shape is generated first.
//!
//! ```text
//! cargo run --release --example prepare_tasks -- [out_dir] [subset_per_class]
//! ```

use std::path::PathBuf;

use forgetbench::data::synthetic::{self, SyntheticSpec};
use forgetbench::data::{load_clinc150, prepare, save_prepared, PrepareOptions};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/tasks".into()));
    let subset = args.next().map(|s| s.parse()).transpose()?;

    let source = match std::env::var_os("FORGETBENCH_DATA") {
        Some(p) => PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("forgetbench_synthetic.json");
            synthetic::write(&SyntheticSpec::default(), &p)?;
            println!(
                "FORGETBENCH_DATA not set; generated a synthetic corpus at {}",
                p.display()
            );
            p
        }
    };
    let raw = load_clinc150(&source)?;
    println!(
        "{} intents; {} / {} / {} in-scope utterances; dropped out-of-scope {:?}",
        raw.intents()
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        raw.train.len(),
        raw.val.len(),
        raw.test.len(),
        raw.oos_dropped
    );

    let opts = PrepareOptions {
        subset_per_class: subset,
        ..PrepareOptions::default()
    };
    let prepared = prepare(&raw, &opts)?;
    let manifest = save_prepared(&out, &prepared)?;
    println!(
        "vocabulary: {} tokens, hash {}",
        manifest.vocab_size, manifest.vocab_hash
    );
    for (t, (labels, c)) in manifest.label_sets.iter().zip(&manifest.counts).enumerate() {
        let names: Vec<&str> = labels
            .iter()
            .take(3)
            .map(|&l| prepared.labels.decode(l).unwrap_or("?"))
            .collect();
        println!(
            "task {:2}: {} labels ({}, ...), train {} val {} test {}",
            t + 1,
            labels.len(),
            names.join(", "),
            c.train,
            c.val,
            c.test
        );
    }
    println!("cache written to {}", out.display());
    Ok(())
}
