use crate::autograd::{cross_entropy_rows, Tensor};
use crate::data::{make_batch, Utterance};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, macro_f1};
use crate::models::Model;

/// Predictions and scores on one test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Mean cross-entropy.
    pub loss: f64,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Evaluation-mode pass over `items`: argmax over every class of the head,
/// with `gates` applied when given. Macro-F1 averages over the classes that
/// occur among the labels or the predictions.
pub fn evaluate(
    model: &Model,
    items: &[Utterance],
    gates: Option<&[Tensor]>,
    batch_size: usize,
) -> Result<Evaluation> {
    if items.is_empty() {
        return Err(Error::Data("empty evaluation set".into()));
    }
    let mut predictions = Vec::with_capacity(items.len());
    let mut total_loss = 0.0;
    for chunk in items.chunks(batch_size.max(1)) {
        let refs: Vec<&Utterance> = chunk.iter().collect();
        let batch = make_batch(&refs)?;
        let logits = model.logits(&batch, gates)?;
        total_loss += cross_entropy_rows(&logits, &batch.labels)?
            .iter()
            .sum::<f64>();
        predictions.extend(logits.argmax_rows());
    }
    let labels: Vec<usize> = items.iter().map(|u| u.label_id).collect();
    let classes: Vec<usize> = (0..model.config().num_classes).collect();
    Ok(Evaluation {
        accuracy: accuracy(&predictions, &labels)?,
        macro_f1: macro_f1(&predictions, &labels, &classes)?,
        loss: total_loss / items.len() as f64,
        predictions,
        labels,
    })
}
