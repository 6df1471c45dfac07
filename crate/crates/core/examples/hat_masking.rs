//! Hard attention to the task: gates from task embeddings, the cumulative
//! mask over a task sequence, and how it attenuates gradients.

use forgetbench::models::{MaskableLayerHandle, ParamGating};
use forgetbench::strategies::{hat_cumulate, hat_gates, hat_scale_gradients, HatState};

fn fmt(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() {
    let handles = [MaskableLayerHandle {
        layer_id: "hidden".into(),
        width: 6,
    }];
    let mut hat = HatState::new(&handles, 4.0, 21);
    for task in 1..=3 {
        hat.ensure_task(task);
        println!(
            "task {task} gates      {}",
            fmt(&hat_gates(&hat, 0, task).unwrap())
        );
        hat_cumulate(&mut hat, task);
        println!("cumulative after {task} {}", fmt(&hat.cumulative()[0]));
    }

    // A 2x6 weight feeding the hidden layer: column i belongs to unit i.
    let gating = [ParamGating {
        param: 0,
        out_handle: Some(0),
        in_handle: None,
    }];
    let mut grads = vec![vec![1.0; 12]];
    hat_scale_gradients(&mut grads, &[&[2, 6]], &gating, hat.cumulative());
    println!("unit gradient scaled  {}", fmt(&grads[0][..6]));

    // A sharper slope pushes the same embeddings toward binary gates.
    for s in [1.0, 4.0, 50.0, 400.0] {
        let mut sharp = HatState::new(&handles, s, 21);
        sharp.ensure_task(1);
        println!(
            "s = {s:<5} task 1 gates {}",
            fmt(&hat_gates(&sharp, 0, 1).unwrap())
        );
    }
}
