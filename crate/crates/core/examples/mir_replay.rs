//! Reservoir buffer and maximally interfered retrieval on a two-task
//! synthetic problem: after learning task 1, which stored examples would a
//! step on a task 2 batch hurt most?

use forgetbench::autograd::{cross_entropy_rows, Optimizer, OptimizerKind, Tape};
use forgetbench::data::synthetic::{generate, SyntheticSpec};
use forgetbench::data::{make_batch, parse_clinc150, prepare, PrepareOptions, Utterance};
use forgetbench::models::{Architecture, Batch, Mode, Model, ModelConfig, Params};
use forgetbench::strategies::{
    buffer_update, compose_step, mir_select, MirParams, ReplayBuffer, ReplayItem, StrategyParams,
    StrategySet, StrategyState,
};

fn loss_of(model: &Model, params: &Params, item: &ReplayItem) -> anyhow::Result<f64> {
    let b = Batch::from_sequences(&[(&item.token_ids, &item.mask)], &[item.label_id])?;
    Ok(cross_entropy_rows(&model.logits_with(params, &b, None)?, &b.labels)?[0])
}

fn main() -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        intents: 10,
        train_per_intent: 40,
        val_per_intent: 5,
        test_per_intent: 5,
        oos: [0, 0, 0],
        ..SyntheticSpec::default()
    };
    let data = prepare(
        &parse_clinc150(&generate(&spec))?,
        &PrepareOptions {
            num_tasks: 2,
            ..PrepareOptions::default()
        },
    )?;
    let cfg = ModelConfig {
        embed_dim: 16,
        hidden_dim: 32,
        num_classes: data.labels.len(),
        // Without dropout the hand-made virtual step below is the one MIR takes.
        dropout_p: 0.0,
        ..ModelConfig::new(Architecture::Ann, data.vocab.len())
    };
    let mut model = Model::build(cfg, 3)?;

    // Task 1 with plain fine-tuning; every batch also streams into the buffer.
    let naive = StrategySet::naive();
    let sp = StrategyParams::default();
    let mut state = StrategyState::new(&naive, &sp, &model, 0);
    let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01);
    let mut buffer = ReplayBuffer::new(60, 11);
    let task1 = &data.tasks[0].train;
    for epoch in 0..5u64 {
        for (b, chunk) in task1.chunks(16).enumerate() {
            let refs: Vec<&Utterance> = chunk.iter().collect();
            compose_step(
                &mut model,
                &mut opt,
                &mut state,
                &naive,
                &sp,
                &refs,
                1,
                &[],
                epoch * 100 + b as u64,
            )?;
            if epoch == 0 {
                buffer_update(&mut buffer, &refs, 1);
            }
        }
    }
    println!(
        "buffer holds {} of {} streamed task-1 examples",
        buffer.len(),
        buffer.seen_count()
    );

    let incoming: Vec<&Utterance> = data.tasks[1].train.iter().take(16).collect();
    let batch = make_batch(&incoming)?;
    let p = MirParams {
        eta_virtual: 0.5,
        k: 8,
        n_candidates: None,
    };
    let chosen = mir_select(&model, None, &batch, &buffer, &p, 2, 5)?;

    // The same virtual step by hand, to show each item's loss increase.
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true)?;
    let z = model.forward(&mut tape, &bound, &batch, None, Mode::Eval)?;
    let loss = tape.cross_entropy(z, &batch.labels)?;
    tape.backward(loss)?;
    let mut shifted = model.params().clone();
    for (t, v) in shifted.tensors_mut().iter_mut().zip(&bound) {
        if let Some(g) = tape.grad(*v) {
            for (w, d) in t.data_mut().iter_mut().zip(g) {
                *w -= p.eta_virtual * d;
            }
        }
    }
    let increase = |it: &ReplayItem| -> anyhow::Result<f64> {
        Ok(loss_of(&model, &shifted, it)? - loss_of(&model, model.params(), it)?)
    };
    let all: Vec<f64> = buffer
        .items()
        .iter()
        .map(&increase)
        .collect::<anyhow::Result<_>>()?;
    println!(
        "loss increase over the buffer: mean {:+.4}, max {:+.4}",
        all.iter().sum::<f64>() / all.len() as f64,
        all.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    );
    println!("MIR picks (label, loss increase):");
    for it in &chosen {
        println!(
            "  {:<16} {:+.4}",
            data.labels.decode(it.label_id).unwrap_or("?"),
            increase(it)?
        );
    }
    Ok(())
}
