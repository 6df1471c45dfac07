use super::replay::items_batch;
use super::{
    buffer_update, lwf_loss, mir_select, MirParams, ReplayItem, Strategy, StrategyParams,
    StrategySet, StrategyState,
};
use crate::autograd::{Optimizer, Tape, Tensor};
use crate::data::{make_batch, Utterance};
use crate::error::{Error, Result};
use crate::models::{Mode, Model};
use crate::seeds;

use super::hat_scale_gradients;

/// Losses observed in one training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Total objective that was differentiated.
    pub loss: f64,
    pub task_loss: f64,
    /// Weighted distillation term, when LwF contributed.
    pub distill_loss: Option<f64>,
    /// Replayed buffer items appended to the batch.
    pub replayed: usize,
}

/// One optimizer step on `batch` from task `task_index` with the strategies
/// in `set`, in this order: MIR retrieval, forward and task loss on the batch
/// plus retrieved items, LwF distillation, HAT gradient attenuation,
/// parameter update, then the batch (without replayed items) enters the
/// buffer.
///
/// Under HAT the current task's gates are used by the training forward, the
/// MIR virtual step and the LwF teacher alike. `seen_classes` lists the
/// labels of tasks trained so far and only matters when distillation is
/// restricted to them.
#[allow(clippy::too_many_arguments)]
pub fn compose_step(
    model: &mut Model,
    optimizer: &mut Optimizer,
    state: &mut StrategyState,
    set: &StrategySet,
    params: &StrategyParams,
    batch: &[&Utterance],
    task_index: usize,
    seen_classes: &[usize],
    seed: u64,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::Data("empty training batch".into()));
    }
    let hat_on = set.contains(Strategy::Hat);
    if hat_on && state.hat.is_none() {
        return Err(Error::Config(
            "HAT is active but its state is missing".into(),
        ));
    }
    let gate_values: Option<Vec<Tensor>> = state
        .hat
        .as_mut()
        .filter(|_| hat_on)
        .map(|h| h.gates(task_index));
    let new_batch = make_batch(batch)?;

    let mut replay: Vec<ReplayItem> = Vec::new();
    if set.contains(Strategy::Mir) {
        if let Some(buffer) = &state.buffer {
            let mir = MirParams {
                eta_virtual: params.eta_virtual,
                k: params.k.unwrap_or(batch.len()),
                n_candidates: params.n_candidates,
            };
            replay = mir_select(
                model,
                gate_values.as_deref(),
                &new_batch,
                buffer,
                &mir,
                task_index,
                seeds::derive(seed, &[1]),
            )?;
        }
    }
    let combined = if replay.is_empty() {
        new_batch
    } else {
        let as_items: Vec<ReplayItem> = batch
            .iter()
            .map(|u| ReplayItem {
                token_ids: u.token_ids.clone(),
                mask: u.mask.clone(),
                label_id: u.label_id,
                task_index,
                inserted: 0,
            })
            .collect();
        let all: Vec<&ReplayItem> = as_items.iter().chain(&replay).collect();
        items_batch(&all)?
    };

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true)?;
    let mut embed_vars = Vec::new();
    let mut gate_vars = None;
    if hat_on {
        let hat = state.hat.as_ref().expect("checked above");
        let emb = hat
            .embeddings(task_index)
            .expect("gates() initialized the task");
        let mut gv = Vec::with_capacity(emb.len());
        for e in emb {
            let ev = tape.param(Tensor::vector(e.clone()))?;
            let scaled = tape.scale(ev, hat.s)?;
            gv.push(tape.sigmoid(scaled)?);
            embed_vars.push(ev);
        }
        gate_vars = Some(gv);
    }
    let logits = model.forward(
        &mut tape,
        &bound,
        &combined,
        gate_vars.as_deref(),
        Mode::Train {
            dropout_seed: seeds::derive(seed, &[2]),
        },
    )?;
    let task_loss = tape.cross_entropy(logits, &combined.labels)?;
    let mut loss = task_loss;
    let mut distill_loss = None;
    if set.contains(Strategy::Lwf) {
        if let Some(teacher) = &state.teacher {
            let z_old = model.logits_with(&teacher.params, &combined, gate_values.as_deref())?;
            let classes = params.lwf_seen_classes_only.then_some(seen_classes);
            loss = lwf_loss(
                &mut tape,
                task_loss,
                logits,
                &z_old,
                params.temperature,
                params.alpha_lwf,
                classes,
            )?;
            distill_loss = Some(tape.value(loss).item() - tape.value(task_loss).item());
        }
    }
    tape.backward(loss)?;

    let mut grads: Vec<Vec<f64>> = bound
        .iter()
        .map(|&v| {
            tape.grad(v)
                .map_or_else(|| vec![0.0; tape.value(v).len()], <[f64]>::to_vec)
        })
        .collect();
    if hat_on {
        let shapes: Vec<&[usize]> = model.params().tensors().iter().map(Tensor::shape).collect();
        let cumulative = state.hat.as_ref().expect("checked above").cumulative();
        hat_scale_gradients(&mut grads, &shapes, model.param_gating(), cumulative);
    }
    let mut embed_tensors: Vec<Tensor> =
        embed_vars.iter().map(|&v| tape.value(v).clone()).collect();
    for &v in &embed_vars {
        grads.push(
            tape.grad(v)
                .map_or_else(|| vec![0.0; tape.value(v).len()], <[f64]>::to_vec),
        );
    }
    let report = StepReport {
        loss: tape.value(loss).item(),
        task_loss: tape.value(task_loss).item(),
        distill_loss,
        replayed: replay.len(),
    };
    drop(tape);

    let grad_refs: Vec<Option<&[f64]>> = grads.iter().map(|g| Some(g.as_slice())).collect();
    let mut targets: Vec<&mut Tensor> = model
        .params_mut()
        .tensors_mut()
        .iter_mut()
        .chain(embed_tensors.iter_mut())
        .collect();
    optimizer.step(&mut targets, &grad_refs);
    if hat_on {
        let updated = embed_tensors.into_iter().map(Tensor::into_data).collect();
        state
            .hat
            .as_mut()
            .expect("checked above")
            .set_embeddings(task_index, updated);
    }
    if set.contains(Strategy::Mir) {
        if let Some(buffer) = state.buffer.as_mut() {
            buffer_update(buffer, batch, task_index);
        }
    }
    Ok(report)
}
