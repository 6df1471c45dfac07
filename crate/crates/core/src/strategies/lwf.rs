use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::Params;

/// Frozen copy of the parameters taken at the end of task `snapshot_task`.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherSnapshot {
    pub params: Params,
    pub snapshot_task: usize,
}

/// `task_loss + alpha_lwf · T² · mean_batch KL(softmax(z_old/T) ‖ softmax(z_new/T))`.
///
/// `logits_old` comes from the teacher and is treated as a constant, so the
/// distillation gradient reaches only the student. When `classes` is given,
/// both logit vectors are restricted to those columns first.
pub fn lwf_loss(
    tape: &mut Tape,
    task_loss: Var,
    logits_new: Var,
    logits_old: &Tensor,
    temperature: f64,
    alpha_lwf: f64,
    classes: Option<&[usize]>,
) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let (z_new, z_old) = match classes {
        None => (logits_new, logits_old.clone()),
        Some(cols) => {
            let (_, c) = tape.value(logits_new).dims2();
            let select = selection_matrix(c, cols)?;
            let z_old = restrict(logits_old, cols);
            let p = tape.constant(select)?;
            (tape.matmul(logits_new, p)?, z_old)
        }
    };
    let kl = tape.kl_div_temperature(&z_old, z_new, temperature)?;
    let weighted = tape.scale(kl, alpha_lwf * temperature * temperature)?;
    tape.add(task_loss, weighted)
}

/// `[c × cols.len()]` matrix picking the listed columns.
fn selection_matrix(c: usize, cols: &[usize]) -> Result<Tensor> {
    let mut data = vec![0.0; c * cols.len()];
    for (k, &j) in cols.iter().enumerate() {
        if j >= c {
            return Err(Error::Index {
                op: "lwf_loss",
                index: j,
                bound: c,
            });
        }
        data[j * cols.len() + k] = 1.0;
    }
    Tensor::matrix(c, cols.len(), data)
}

fn restrict(z: &Tensor, cols: &[usize]) -> Tensor {
    let (r, _) = z.dims2();
    let data = (0..r)
        .flat_map(|i| cols.iter().map(move |&j| z.row(i)[j]))
        .collect();
    Tensor::matrix(r, cols.len(), data).expect("nonempty selection")
}
