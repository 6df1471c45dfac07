//! Finite-difference gradient checking.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Tensor, Var};

/// Entries drawn from U(-1, 1).
pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Central finite differences (step 1e-5) against the tape's gradients.
/// Returns the worst relative error, with denominators floored at 1e-4 so
/// vanishing gradients are judged on absolute error.
///
/// `build` is called once on a tape with the inputs as parameters and then
/// twice per input entry with perturbed constants; it must return a scalar.
pub fn gradcheck<F>(inputs: &[Tensor], build: F) -> crate::Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> crate::Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.param(t.clone()))
        .collect::<crate::Result<Vec<Var>>>()?;
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let eval = |ins: &[Tensor]| -> crate::Result<f64> {
        let mut t = Tape::new();
        let vs = ins
            .iter()
            .map(|x| t.constant(x.clone()))
            .collect::<crate::Result<Vec<Var>>>()?;
        let l = build(&mut t, &vs)?;
        Ok(t.value(l).item())
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(vars[i])
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; input.len()]);
        for j in 0..input.len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let fp = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let fm = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
