//! The three backbones side by side: parameter counts against the closed
//! form, maskable layers, and logits for a padded batch.

use forgetbench::autograd::softmax_rows;
use forgetbench::models::{Architecture, Batch, Model, ModelConfig};

fn main() -> anyhow::Result<()> {
    let seqs: Vec<(Vec<usize>, Vec<u8>)> = vec![
        (vec![4, 9, 13, 2, 0, 0], vec![1, 1, 1, 1, 0, 0]),
        (vec![7, 0, 0, 0, 0, 0], vec![1, 0, 0, 0, 0, 0]),
        (vec![3, 3, 8, 11, 6, 5], vec![1, 1, 1, 1, 1, 1]),
    ];
    let refs: Vec<(&[usize], &[u8])> = seqs.iter().map(|(t, m)| (&t[..], &m[..])).collect();
    let batch = Batch::from_sequences(&refs, &[0, 1, 2])?;

    for arch in Architecture::ALL {
        let cfg = ModelConfig {
            embed_dim: 16,
            hidden_dim: 24,
            num_classes: 5,
            ..ModelConfig::new(arch, 20)
        };
        let model = Model::build(cfg.clone(), 1)?;
        println!(
            "{arch}: {} parameters (closed form {})",
            model.num_params(),
            cfg.expected_param_count()
        );
        for h in model.handles() {
            println!("  maskable {:<16} width {}", h.layer_id, h.width);
        }
        let probs = softmax_rows(&model.logits(&batch, None)?);
        for i in 0..batch.batch {
            let row: Vec<String> = probs.row(i).iter().map(|p| format!("{p:.3}")).collect();
            println!("  p(y | x{i}) = [{}]", row.join(", "));
        }
    }
    Ok(())
}
