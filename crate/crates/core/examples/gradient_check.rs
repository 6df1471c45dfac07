//! Finite-difference check of the tape's gradients: a few primitives and a
//! full backward pass through each backbone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use forgetbench::autograd::check::{gradcheck, rand_tensor};
use forgetbench::autograd::Tensor;
use forgetbench::models::{Architecture, Batch, Mode, Model, ModelConfig};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let x = rand_tensor(&mut rng, &[4, 6]);
    let w = rand_tensor(&mut rng, &[6, 3]);
    let err = gradcheck(&[x, w], |t, v| {
        let h = t.matmul(v[0], v[1])?;
        let h = t.tanh(h)?;
        t.cross_entropy(h, &[0, 2, 1, 1])
    })?;
    println!("matmul -> tanh -> cross-entropy   max rel error {err:.2e}");

    let x = rand_tensor(&mut rng, &[3, 8]);
    let (g, b) = (rand_tensor(&mut rng, &[8]), rand_tensor(&mut rng, &[8]));
    let err = gradcheck(&[x, g, b], |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2])?;
        let y = t.softmax(y)?;
        t.mean(y)
    })?;
    println!("layer_norm -> softmax -> mean     max rel error {err:.2e}");

    let ids = [1, 5, 2, 0, 3, 4, 0, 0];
    let mask = [1, 1, 1, 0, 1, 1, 0, 0];
    let batch =
        Batch::from_sequences(&[(&ids[..4], &mask[..4]), (&ids[4..], &mask[4..])], &[1, 2])?;
    for arch in Architecture::ALL {
        let cfg = ModelConfig {
            embed_dim: 4,
            hidden_dim: 5,
            num_classes: 3,
            num_layers: 1,
            num_heads: 2,
            ..ModelConfig::new(arch, 6)
        };
        let model = Model::build(cfg, 7)?;
        let np = model.params().len();
        let mut inputs = model.params().tensors().to_vec();
        inputs.extend(
            model
                .handles()
                .iter()
                .map(|h| Tensor::full(&[h.width], 0.6)),
        );
        let err = gradcheck(&inputs, |t, v| {
            let z = model.forward(
                t,
                &v[..np],
                &batch,
                Some(&v[np..]),
                Mode::Train { dropout_seed: 3 },
            )?;
            t.cross_entropy(z, &batch.labels)
        })?;
        println!(
            "{arch:<12} {:>4} weights + gates   max rel error {err:.2e}",
            model.num_params()
        );
    }
    Ok(())
}
