//! Filling a performance matrix row by row and reading off the continual
//! learning metrics and their per-task curves.

use forgetbench::metrics::{Metric, Metrics, PerformanceMatrix};

fn main() -> anyhow::Result<()> {
    // Accuracy on task j after training on task i; F1 a little lower.
    let acc = [
        vec![0.95],
        vec![0.40, 0.93],
        vec![0.22, 0.35, 0.96],
        vec![0.10, 0.18, 0.41, 0.94],
    ];
    let mut r = PerformanceMatrix::new(acc.len());
    for (i, row) in acc.iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            r.record(i + 1, j + 1, a, a - 0.03)?;
        }
        println!(
            "after task {}: average accuracy {:.4}",
            i + 1,
            r.average_at(Metric::Accuracy, i + 1)?
        );
    }
    print!("\n{}", r.to_csv(Metric::Accuracy));

    let m = Metrics::from_matrix(&r)?;
    println!("\n{}", serde_json::to_string_pretty(&m)?);

    let c = r.curves();
    println!("\ntask  AA      AF1     avg BWT acc");
    for t in 0..c.aa.len() {
        let bwt = c.avg_bwt_acc[t].map_or("-".to_string(), |v| format!("{v:.4}"));
        println!("{:>4}  {:.4}  {:.4}  {bwt}", t + 1, c.aa[t], c.af1[t]);
    }
    Ok(())
}
