//! The distillation term of Learning without Forgetting: how the total loss
//! reacts to temperature and weight when the student drifts from a frozen
//! teacher.

use forgetbench::autograd::{Tape, Tensor};
use forgetbench::strategies::lwf_loss;

fn total(
    teacher: &Tensor,
    student: &Tensor,
    t: f64,
    alpha: f64,
    classes: Option<&[usize]>,
) -> anyhow::Result<(f64, f64)> {
    let mut tape = Tape::new();
    let z = tape.param(student.clone())?;
    let task = tape.cross_entropy(z, &[0])?;
    let l = lwf_loss(&mut tape, task, z, teacher, t, alpha, classes)?;
    Ok((tape.value(task).item(), tape.value(l).item()))
}

fn main() -> anyhow::Result<()> {
    let teacher = Tensor::matrix(1, 5, vec![3.0, 1.0, 0.2, -1.0, -2.0])?;
    let student = Tensor::matrix(1, 5, vec![2.0, 2.5, 0.0, -1.5, 1.0])?;

    println!("student == teacher at T = 2:");
    let (task, l) = total(&teacher, &teacher, 2.0, 1.0, None)?;
    println!("  task {task:.5}  total {l:.5}");

    println!("drifted student, alpha = 1:");
    for t in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let (task, l) = total(&teacher, &student, t, 1.0, None)?;
        println!("  T = {t:<4} task {task:.5}  distillation {:.5}", l - task);
    }

    println!("drifted student, T = 2:");
    for alpha in [0.0, 0.5, 1.0, 2.0] {
        let (task, l) = total(&teacher, &student, 2.0, alpha, None)?;
        println!("  alpha = {alpha:<4} total {l:.5} (task {task:.5})");
    }

    let (task, l) = total(&teacher, &student, 2.0, 1.0, Some(&[0, 1, 2]))?;
    println!("restricted to classes 0..3: distillation {:.5}", l - task);
    Ok(())
}
