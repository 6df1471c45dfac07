use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// First-order parameter update. State is kept per slot, where a slot is
/// the position of a parameter in the list handed to [`Optimizer::step`].
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Applies one update. `grads[i]` is `None` for parameters that did not
    /// receive a gradient this step; their state is left untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&[f64]>]) {
        assert_eq!(params.len(), grads.len(), "one gradient slot per parameter");
        if self.m.len() < params.len() {
            self.m.resize(params.len(), Vec::new());
            self.v.resize(params.len(), Vec::new());
        }
        self.t += 1;
        for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let data = p.data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &d) in data.iter_mut().zip(g.iter()) {
                        *w -= self.lr * d;
                    }
                }
                OptimizerKind::Adam => {
                    let m = &mut self.m[slot];
                    let v = &mut self.v[slot];
                    if m.len() != data.len() {
                        *m = vec![0.0; data.len()];
                        *v = vec![0.0; data.len()];
                    }
                    let bc1 = 1.0 - self.beta1.powi(self.t);
                    let bc2 = 1.0 - self.beta2.powi(self.t);
                    for i in 0..data.len() {
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}
