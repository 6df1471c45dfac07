use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::testutil::{gradcheck, rand_tensor};

fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> crate::Result<Var> {
    // Random projection to a scalar so every output coordinate matters.
    let shape = tape.value(x).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let w = tape.constant(rand_tensor(&mut rng, &shape))?;
    let y = tape.mul(x, w)?;
    tape.sum(y)
}

#[test]
fn matmul_identity_and_projector() {
    let mut tape = Tape::new();
    let i2 = tape
        .constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap())
        .unwrap();
    let m = tape
        .constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap())
        .unwrap();
    let c = tape.matmul(i2, m).unwrap();
    assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);

    let p = tape
        .constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap())
        .unwrap();
    let b = tape
        .constant(Tensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap())
        .unwrap();
    let c = tape.matmul(p, b).unwrap();
    assert_eq!(tape.value(c).data(), &[5.0, 6.0, 0.0, 0.0]);
}

#[test]
fn matmul_rejects_inner_mismatch() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
    let b = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
    assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
}

#[test]
fn matmul_gradient_of_sum_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_tensor(&mut rng, &[3, 4]);
    let b = rand_tensor(&mut rng, &[4, 2]);
    let err = gradcheck(&[a, b], |t, v| {
        let c = t.matmul(v[0], v[1])?;
        t.sum(c)
    });
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn masked_mean_pool_examples() {
    let rows = Tensor::from_rows(&[vec![2.0, 4.0], vec![6.0, 8.0]]).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(rows).unwrap();
    let all = tape.masked_mean_pool(x, &[1.0, 1.0], 2).unwrap();
    assert_eq!(tape.value(all).data(), &[4.0, 6.0]);
    let first = tape.masked_mean_pool(x, &[1.0, 0.0], 2).unwrap();
    assert_eq!(tape.value(first).data(), &[2.0, 4.0]);
    assert!(matches!(
        tape.masked_mean_pool(x, &[0.0, 0.0], 2),
        Err(Error::EmptySequence { .. })
    ));
}

#[test]
fn masked_mean_pool_equals_mean_of_unmasked_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = rand_tensor(&mut rng, &[5, 3]);
    let mut tape = Tape::new();
    let x = tape.constant(h.clone()).unwrap();
    let p = tape
        .masked_mean_pool(x, &[1.0, 1.0, 1.0, 0.0, 0.0], 5)
        .unwrap();
    for j in 0..3 {
        let expected = (h.row(0)[j] + h.row(1)[j] + h.row(2)[j]) / 3.0;
        assert!((tape.value(p).data()[j] - expected).abs() < 1e-15);
    }
}

#[test]
fn cross_entropy_examples() {
    let mut tape = Tape::new();
    let z = tape
        .constant(Tensor::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap())
        .unwrap();
    let l = tape.cross_entropy(z, &[0]).unwrap();
    assert!((tape.value(l).item() - 3f64.ln()).abs() < 1e-12);

    let z = tape
        .constant(Tensor::from_rows(&[vec![1000.0, 0.0]]).unwrap())
        .unwrap();
    let l = tape.cross_entropy(z, &[0]).unwrap();
    assert!(tape.value(l).item().abs() < 1e-12);

    // -log(e^3 / (e^1 + e^2 + e^3)) by direct arithmetic.
    let oracle = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln() - 3.0;
    assert!((oracle - 0.40761).abs() < 5e-6);
    let z = tape
        .constant(Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap())
        .unwrap();
    let l = tape.cross_entropy(z, &[2]).unwrap();
    assert!((tape.value(l).item() - oracle).abs() < 1e-12);

    assert!(matches!(
        tape.cross_entropy(z, &[3]),
        Err(Error::Index { .. })
    ));
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let mut tape = Tape::new();
    let z = tape
        .param(Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap())
        .unwrap();
    let l = tape.cross_entropy(z, &[2]).unwrap();
    tape.backward(l).unwrap();
    let s = softmax_rows(tape.value(z));
    let g = tape.grad(z).unwrap();
    for j in 0..3 {
        let onehot = if j == 2 { 1.0 } else { 0.0 };
        assert!((g[j] - (s.data()[j] - onehot)).abs() < 1e-15);
    }
}

#[test]
fn kl_examples() {
    let mut tape = Tape::new();
    let same = Tensor::from_rows(&[vec![0.3, -1.2, 2.0]]).unwrap();
    let z = tape.param(same.clone()).unwrap();
    for t in [0.5, 1.0, 2.0, 7.0] {
        let kl = tape.kl_div_temperature(&same, z, t).unwrap();
        assert_eq!(tape.value(kl).item(), 0.0);
    }

    // Direct arithmetic: p_old = softmax([0.5, 0]), p_new = its reverse.
    let a = 1.0 / (1.0 + (-0.5f64).exp());
    let oracle = a * (a / (1.0 - a)).ln() + (1.0 - a) * ((1.0 - a) / a).ln();
    assert!((oracle - 0.12246).abs() < 5e-6);
    let old = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let z = tape
        .param(Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap())
        .unwrap();
    let kl = tape.kl_div_temperature(&old, z, 2.0).unwrap();
    assert!((tape.value(kl).item() - oracle).abs() < 1e-12);

    let kl = tape.kl_div_temperature(&old, z, 1e6).unwrap();
    assert!(tape.value(kl).item() < 1e-6);

    assert!(matches!(
        tape.kl_div_temperature(&old, z, 0.0),
        Err(Error::Config(_))
    ));
}

#[test]
fn backward_examples_and_errors() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![0.5, -2.0, 3.0])).unwrap();
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    assert!(matches!(tape.backward(s), Err(Error::Backward(_))));
    tape.zero_grad();
    assert!(tape.grad(x).is_none());

    let y = tape.tanh(x).unwrap();
    let ys = tape.sum(y).unwrap();
    let zero = tape.scale(ys, 0.0).unwrap();
    tape.backward(zero).unwrap();
    assert!(tape.grad(x).unwrap().iter().all(|&g| g == 0.0));

    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0])).unwrap();
    let y = tape.relu(x).unwrap();
    assert!(matches!(tape.backward(y), Err(Error::Backward(_))));
    let c = tape.constant(Tensor::scalar(1.0)).unwrap();
    assert!(matches!(tape.backward(c), Err(Error::Backward(_))));
}

#[test]
fn overflow_is_reported() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![1e308])).unwrap();
    assert!(matches!(tape.scale(x, 10.0), Err(Error::NonFinite { .. })));
}

#[test]
fn dropout_is_seeded_and_identity_in_eval() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[4, 8], 1.0)).unwrap();
    let a = tape.dropout(x, 0.5, true, 11).unwrap();
    let b = tape.dropout(x, 0.5, true, 11).unwrap();
    assert_eq!(tape.value(a), tape.value(b));
    assert!(tape.value(a).data().iter().all(|&v| v == 0.0 || v == 2.0));
    let e = tape.dropout(x, 0.5, false, 11).unwrap();
    assert_eq!(e, x);
}

#[test]
fn every_primitive_passes_gradcheck_on_ten_seeds() {
    type Build = fn(&mut Tape, &[Var], u64) -> crate::Result<Var>;
    let cases: Vec<(&str, Vec<Vec<usize>>, Build)> = vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v, s| {
            let y = t.matmul(v[0], v[1])?;
            weighted_sum(t, y, s)
        }),
        ("add_sub_mul", vec![vec![3, 4], vec![3, 4]], |t, v, s| {
            let a = t.add(v[0], v[1])?;
            let b = t.sub(v[0], v[1])?;
            let y = t.mul(a, b)?;
            weighted_sum(t, y, s)
        }),
        (
            "add_bias_mul_row",
            vec![vec![3, 4], vec![4], vec![4]],
            |t, v, s| {
                let a = t.add_bias(v[0], v[1])?;
                let y = t.mul_row(a, v[2])?;
                weighted_sum(t, y, s)
            },
        ),
        ("sigmoid_tanh_one_minus", vec![vec![2, 5]], |t, v, s| {
            let a = t.sigmoid(v[0])?;
            let b = t.tanh(v[0])?;
            let c = t.one_minus(a)?;
            let y = t.mul(b, c)?;
            weighted_sum(t, y, s)
        }),
        ("relu_scale", vec![vec![3, 3]], |t, v, s| {
            let a = t.relu(v[0])?;
            let y = t.scale(a, 1.7)?;
            weighted_sum(t, y, s)
        }),
        ("dropout", vec![vec![4, 4]], |t, v, s| {
            let y = t.dropout(v[0], 0.3, true, s)?;
            weighted_sum(t, y, s)
        }),
        ("embedding", vec![vec![5, 3]], |t, v, s| {
            let y = t.embedding(v[0], &[4, 1, 1, 0, 3])?;
            weighted_sum(t, y, s)
        }),
        ("slice_select", vec![vec![6, 2], vec![3, 2]], |t, v, s| {
            let a = t.slice_rows(v[0], 2, 3)?;
            let y = t.select_rows(&[true, false, true], a, v[1])?;
            weighted_sum(t, y, s)
        }),
        ("masked_mean_pool", vec![vec![6, 3]], |t, v, s| {
            let y = t.masked_mean_pool(v[0], &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0], 3)?;
            weighted_sum(t, y, s)
        }),
        (
            "layer_norm",
            vec![vec![3, 5], vec![5], vec![5]],
            |t, v, s| {
                let y = t.layer_norm(v[0], v[1], v[2])?;
                weighted_sum(t, y, s)
            },
        ),
        ("softmax", vec![vec![3, 4]], |t, v, s| {
            let y = t.softmax(v[0])?;
            weighted_sum(t, y, s)
        }),
        ("cross_entropy", vec![vec![3, 5]], |t, v, _| {
            t.cross_entropy(v[0], &[4, 0, 2])
        }),
        ("kl_div_temperature", vec![vec![2, 4]], |t, v, s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s + 99);
            let old = rand_tensor(&mut rng, &[2, 4]);
            t.kl_div_temperature(&old, v[0], 2.5)
        }),
        (
            "attention",
            vec![vec![8, 4], vec![8, 4], vec![8, 4]],
            |t, v, s| {
                let mask = [1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
                let y = t.attention(v[0], v[1], v[2], &mask, 2, 4, 2)?;
                weighted_sum(t, y, s)
            },
        ),
        ("mean", vec![vec![2, 3]], |t, v, _| {
            let y = t.sigmoid(v[0])?;
            t.mean(y)
        }),
    ];
    for (name, shapes, build) in cases {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
            let err = gradcheck(&inputs, |t, v| build(t, v, seed));
            assert!(err < 1e-4, "{name} seed {seed}: relative error {err}");
        }
    }
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 1..20), 1..6)) {
        let c = rows[0].len();
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { r.resize(c, 0.0); r }).collect();
        let s = softmax_rows(&Tensor::from_rows(&rows).unwrap());
        for i in 0..rows.len() {
            let sum: f64 = s.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_is_nonnegative(old in prop::collection::vec(-20.0f64..20.0, 2..12), shift in prop::collection::vec(-5.0f64..5.0, 12), t in 0.1f64..10.0) {
        let c = old.len();
        let new: Vec<f64> = old.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let mut tape = Tape::new();
        let z = tape.param(Tensor::matrix(1, c, new).unwrap()).unwrap();
        let kl = tape.kl_div_temperature(&Tensor::matrix(1, c, old).unwrap(), z, t).unwrap();
        prop_assert!(tape.value(kl).item() >= 0.0);
    }
}
