//! Helpers shared by unit tests.

use crate::autograd::{Tape, Tensor, Var};

pub use crate::autograd::check::rand_tensor;

pub fn gradcheck<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> crate::Result<Var>,
{
    crate::autograd::check::gradcheck(inputs, build).unwrap()
}
