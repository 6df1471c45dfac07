//! Acceptance criteria. Each prints one PASS or FAIL line, followed by the
//! reasons for a failure; the process exits non-zero if any criterion fails.
//!
//! Criteria 4 to 7 need the CLINC150 `data_full.json`, located through the
//! `FORGETBENCH_DATA` environment variable. They train the desk-scale grid
//! (50 training utterances per intent, ten tasks) once and cache the runs
//! under the cargo target directory, so later invocations only re-check.

mod common;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use common::*;
use forgetbench::autograd::check::{gradcheck, rand_tensor};
use forgetbench::autograd::{cross_entropy_rows, Optimizer, OptimizerKind, Tape, Tensor, Var};
use forgetbench::data::{
    load_clinc150, prepare, save_prepared, Manifest, PrepareOptions, Utterance,
};
use forgetbench::metrics::{
    accuracy, compute_aa, compute_af1, compute_avg_bwt, compute_bwt, macro_f1, Metric,
    PerformanceMatrix,
};
use forgetbench::models::{Architecture, Batch, Mode, Model, ModelConfig, Params};
use forgetbench::strategies::{
    compose_step, hat_cumulate, lwf_loss, mir_select, MirParams, ReplayBuffer, ReplayItem,
    Strategy, StrategyParams, StrategySet, StrategyState,
};
use forgetbench::trainer::{
    run_grid, ExperimentConfig, GridConfig, Hyperparameters, RunDir, RunRecord,
};

// ---------- 1: metric oracles ----------

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

fn matrix(rows: &[&[f64]]) -> PerformanceMatrix {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    PerformanceMatrix::from_rows(&rows, &rows).unwrap()
}

fn criterion_1_metric_oracles() -> Vec<String> {
    let mut fails = Vec::new();
    fn check(fails: &mut Vec<String>, what: &str, got: f64, want: f64) {
        if !close(got, want) {
            fails.push(format!("{what}: got {got}, expected {want}"));
        }
    }
    // (matrix, AA, BWT, averaged BWT); expected values worked by hand.
    let cases: Vec<(PerformanceMatrix, f64, Option<f64>, Option<f64>)> = vec![
        // R_{2,1} = 0.5: BWT_2 = -0.4, BWT_3 = ((0.3-0.9)+(0.4-0.8))/2 = -0.5.
        (
            matrix(&[&[0.9], &[0.5, 0.8], &[0.3, 0.4, 0.7]]),
            1.4 / 3.0,
            Some(-0.5),
            Some(-0.45),
        ),
        (
            matrix(&[&[1.0], &[1.0, 1.0], &[1.0, 1.0, 1.0]]),
            1.0,
            Some(0.0),
            Some(0.0),
        ),
        (matrix(&[&[0.62]]), 0.62, None, None),
        // Final row 0.1 above the diagonal: BWT_2 = 0.1, BWT_3 = (0.15+0.1)/2.
        (
            matrix(&[&[0.5], &[0.6, 0.4], &[0.65, 0.5, 0.3]]),
            1.45 / 3.0,
            Some(0.125),
            Some(0.1125),
        ),
        // T = 2: averaged BWT equals BWT.
        (matrix(&[&[0.8], &[0.2, 0.9]]), 0.55, Some(-0.6), Some(-0.6)),
        // BWT_2 = -0.5, BWT_3 = (-0.6 - 0.2)/2, BWT_4 = (-0.6 - 0.3 - 0.1)/3.
        (
            matrix(&[&[0.9], &[0.4, 0.8], &[0.3, 0.6, 0.7], &[0.3, 0.5, 0.6, 1.0]]),
            0.6,
            Some(-1.0 / 3.0),
            Some((-0.5 - 0.4 - 1.0 / 3.0) / 3.0),
        ),
    ];
    for (i, (m, aa, bwt, avg)) in cases.iter().enumerate() {
        check(
            &mut fails,
            &format!("matrix {i} AA"),
            compute_aa(m).unwrap(),
            *aa,
        );
        check(
            &mut fails,
            &format!("matrix {i} AF1"),
            compute_af1(m).unwrap(),
            *aa,
        );
        match (bwt, compute_bwt(m, Metric::Accuracy)) {
            (Some(w), Ok(g)) => check(&mut fails, &format!("matrix {i} BWT"), g, *w),
            (None, Err(_)) => {}
            (w, g) => fails.push(format!("matrix {i} BWT: got {g:?}, expected {w:?}")),
        }
        match (avg, compute_avg_bwt(m, Metric::F1)) {
            (Some(w), Ok(g)) => check(&mut fails, &format!("matrix {i} averaged BWT"), g, *w),
            (None, Err(_)) => {}
            (w, g) => fails.push(format!(
                "matrix {i} averaged BWT: got {g:?}, expected {w:?}"
            )),
        }
    }
    check(
        &mut fails,
        "accuracy",
        accuracy(&[0, 1, 1, 2], &[0, 1, 2, 2]).unwrap(),
        0.75,
    );
    check(
        &mut fails,
        "macro F1",
        macro_f1(&[0, 1, 1, 1], &[0, 0, 1, 1], &[0, 1, 2]).unwrap(),
        (2.0 / 3.0 + 0.8) / 2.0,
    );
    // Class 1 predicted everywhere: F1_1 = 2*2/(2*2+2+0), F1_0 = 0.
    check(
        &mut fails,
        "macro F1 degenerate",
        macro_f1(&[1, 1, 1, 1], &[0, 0, 1, 1], &[0, 1]).unwrap(),
        (2.0 / 3.0) / 2.0,
    );
    check(
        &mut fails,
        "macro F1 perfect",
        macro_f1(&[3, 4, 5], &[3, 4, 5], &[3, 4, 5, 6]).unwrap(),
        1.0,
    );
    fails
}

// ---------- 2: gradients ----------

fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> forgetbench::Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = tape.constant(rand_tensor(&mut rng, &shape))?;
    let y = tape.mul(x, w)?;
    tape.sum(y)
}

type Build = fn(&mut Tape, &[Var], u64) -> forgetbench::Result<Var>;

fn primitive_cases() -> Vec<(&'static str, Vec<Vec<usize>>, Build)> {
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v, s| {
            let y = t.matmul(v[0], v[1])?;
            weighted_sum(t, y, s)
        }),
        ("add/sub/mul", vec![vec![3, 4], vec![3, 4]], |t, v, s| {
            let a = t.add(v[0], v[1])?;
            let b = t.sub(v[0], v[1])?;
            let y = t.mul(a, b)?;
            weighted_sum(t, y, s)
        }),
        (
            "add_bias/mul_row",
            vec![vec![3, 4], vec![4], vec![4]],
            |t, v, s| {
                let a = t.add_bias(v[0], v[1])?;
                let y = t.mul_row(a, v[2])?;
                weighted_sum(t, y, s)
            },
        ),
        ("sigmoid/tanh/one_minus", vec![vec![2, 5]], |t, v, s| {
            let a = t.sigmoid(v[0])?;
            let b = t.tanh(v[0])?;
            let c = t.one_minus(a)?;
            let y = t.mul(b, c)?;
            weighted_sum(t, y, s)
        }),
        ("relu/scale", vec![vec![3, 3]], |t, v, s| {
            let a = t.relu(v[0])?;
            let y = t.scale(a, -0.7)?;
            weighted_sum(t, y, s)
        }),
        ("dropout", vec![vec![4, 4]], |t, v, s| {
            let y = t.dropout(v[0], 0.25, true, s)?;
            weighted_sum(t, y, s)
        }),
        ("embedding", vec![vec![5, 3]], |t, v, s| {
            let y = t.embedding(v[0], &[2, 2, 0, 4, 1, 2])?;
            weighted_sum(t, y, s)
        }),
        (
            "slice_rows/select_rows",
            vec![vec![5, 2], vec![2, 2]],
            |t, v, s| {
                let a = t.slice_rows(v[0], 1, 2)?;
                let y = t.select_rows(&[false, true], a, v[1])?;
                weighted_sum(t, y, s)
            },
        ),
        ("masked_mean_pool", vec![vec![8, 3]], |t, v, s| {
            let y = t.masked_mean_pool(v[0], &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0], 4)?;
            weighted_sum(t, y, s)
        }),
        (
            "layer_norm",
            vec![vec![2, 6], vec![6], vec![6]],
            |t, v, s| {
                let y = t.layer_norm(v[0], v[1], v[2])?;
                weighted_sum(t, y, s)
            },
        ),
        ("softmax", vec![vec![2, 5]], |t, v, s| {
            let y = t.softmax(v[0])?;
            weighted_sum(t, y, s)
        }),
        ("cross_entropy", vec![vec![4, 3]], |t, v, _| {
            t.cross_entropy(v[0], &[2, 0, 1, 1])
        }),
        ("kl_div_temperature", vec![vec![3, 4]], |t, v, s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s + 7);
            let old = rand_tensor(&mut rng, &[3, 4]);
            t.kl_div_temperature(&old, v[0], 1.5)
        }),
        (
            "attention",
            vec![vec![6, 4], vec![6, 4], vec![6, 4]],
            |t, v, s| {
                let y = t.attention(v[0], v[1], v[2], &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0], 2, 3, 2)?;
                weighted_sum(t, y, s)
            },
        ),
        ("mean", vec![vec![3, 2]], |t, v, _| {
            let y = t.tanh(v[0])?;
            t.mean(y)
        }),
    ]
}

fn ids(tokens: &[usize], len: usize) -> (Vec<usize>, Vec<u8>) {
    let mut t = tokens.to_vec();
    let mut m = vec![1u8; tokens.len()];
    t.resize(len, 0);
    m.resize(len, 0);
    (t, m)
}

fn criterion_2_gradient_suite() -> Vec<String> {
    let mut fails = Vec::new();
    for (name, shapes, build) in primitive_cases() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
            let err = gradcheck(&inputs, |t, v| build(t, v, seed)).unwrap();
            if err >= 1e-4 {
                fails.push(format!("{name} seed {seed}: relative error {err:e}"));
            }
        }
    }
    let (a, am) = ids(&[1, 4, 5], 4);
    let (b, bm) = ids(&[3, 2], 4);
    let batch = Batch::from_sequences(&[(&a, &am), (&b, &bm)], &[2, 0]).unwrap();
    for arch in Architecture::ALL {
        for seed in 0..10u64 {
            let cfg = ModelConfig {
                vocab_size: 6,
                embed_dim: 4,
                hidden_dim: 3,
                num_classes: 3,
                num_layers: 1,
                num_heads: 2,
                dropout_p: 0.2,
                ..ModelConfig::new(arch, 6)
            };
            let m = Model::build(cfg, seed).unwrap();
            let mut inputs = m.params().tensors().to_vec();
            inputs.extend(m.handles().iter().map(|h| Tensor::full(&[h.width], 0.7)));
            let np = m.params().len();
            let err = gradcheck(&inputs, |t, v| {
                let z = m.forward(
                    t,
                    &v[..np],
                    &batch,
                    Some(&v[np..]),
                    Mode::Train { dropout_seed: seed },
                )?;
                t.cross_entropy(z, &batch.labels)
            })
            .unwrap();
            if err >= 1e-4 {
                fails.push(format!(
                    "{arch} backbone seed {seed}: relative error {err:e}"
                ));
            }
        }
    }
    fails
}

// ---------- 3: strategy oracles ----------

fn tiny(arch: Architecture, classes: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: 12,
        embed_dim: 4,
        hidden_dim: 3,
        num_classes: classes,
        num_layers: 1,
        num_heads: 2,
        dropout_p: 0.0,
        ..ModelConfig::new(arch, 12)
    }
}

fn random_utts(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<Utterance> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..6);
            let toks: Vec<usize> = (0..len).map(|_| rng.random_range(2..12)).collect();
            let (token_ids, mask) = ids(&toks, 8);
            Utterance {
                text: String::new(),
                label_id: rng.random_range(0..classes),
                token_ids,
                mask,
            }
        })
        .collect()
}

fn batch_of(items: &[Utterance]) -> Batch {
    let seqs: Vec<(&[usize], &[u8])> = items
        .iter()
        .map(|u| (&u.token_ids[..], &u.mask[..]))
        .collect();
    let labels: Vec<usize> = items.iter().map(|u| u.label_id).collect();
    Batch::from_sequences(&seqs, &labels).unwrap()
}

fn mean_loss(model: &Model, params: &Params, b: &Batch) -> f64 {
    let z = model.logits_with(params, b, None).unwrap();
    let l = cross_entropy_rows(&z, &b.labels).unwrap();
    l.iter().sum::<f64>() / l.len() as f64
}

/// Interference of every buffer item after one virtual SGD step whose
/// gradient is taken by central differences.
fn brute_force_interference(
    model: &Model,
    batch: &Batch,
    items: &[ReplayItem],
    eta: f64,
) -> Vec<f64> {
    let base = model.params().clone();
    let mut shifted = base.clone();
    let h = 1e-6;
    for p in 0..base.len() {
        for i in 0..base.tensors()[p].len() {
            let mut plus = base.clone();
            plus.tensors_mut()[p].data_mut()[i] += h;
            let mut minus = base.clone();
            minus.tensors_mut()[p].data_mut()[i] -= h;
            let g = (mean_loss(model, &plus, batch) - mean_loss(model, &minus, batch)) / (2.0 * h);
            shifted.tensors_mut()[p].data_mut()[i] -= eta * g;
        }
    }
    items
        .iter()
        .map(|it| {
            let one = Batch::from_sequences(&[(&it.token_ids, &it.mask)], &[it.label_id]).unwrap();
            mean_loss(model, &shifted, &one) - mean_loss(model, &base, &one)
        })
        .collect()
}

fn mir_oracle_failures() -> Vec<String> {
    let mut fails = Vec::new();
    let mut strict = 0;
    for (n, arch) in Architecture::ALL.into_iter().enumerate() {
        for seed in 0..4u64 {
            let model = Model::build(tiny(arch, 3), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(50 + seed + 10 * n as u64);
            let mut buffer = ReplayBuffer::new(5, seed);
            for u in random_utts(&mut rng, 5, 3) {
                buffer.offer(&u.token_ids, &u.mask, u.label_id, 1);
            }
            let batch = batch_of(&random_utts(&mut rng, 4, 3));
            let scores = brute_force_interference(&model, &batch, buffer.items(), 1.5);
            let p = MirParams {
                eta_virtual: 1.5,
                k: 5,
                n_candidates: None,
            };
            let got = mir_select(&model, None, &batch, &buffer, &p, 2, seed).unwrap();
            let order: Vec<usize> = got
                .iter()
                .map(|g| buffer.items().iter().position(|b| b == g).unwrap())
                .collect();
            for w in order.windows(2) {
                let (a, b) = (scores[w[0]], scores[w[1]]);
                if a < b - 1e-7 || ((a - b).abs() <= 1e-7 && w[0] > w[1]) {
                    fails.push(format!(
                        "MIR {arch} seed {seed}: order {order:?} vs scores {scores:?}"
                    ));
                    break;
                }
                if (a - b).abs() > 1e-7 {
                    strict += 1;
                }
            }
            let top2 = mir_select(
                &model,
                None,
                &batch,
                &buffer,
                &MirParams { k: 2, ..p },
                2,
                seed,
            )
            .unwrap();
            if top2[..] != got[..2] {
                fails.push(format!(
                    "MIR {arch} seed {seed}: top-2 is not a prefix of the full ranking"
                ));
            }
        }
    }
    if strict < 12 {
        fails.push(format!(
            "MIR ranking exercised only {strict} strict comparisons"
        ));
    }
    fails
}

fn lwf_oracle_failures() -> Vec<String> {
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let z_new = rand_tensor(&mut rng, &[3, 6]);
        let z_old = rand_tensor(&mut rng, &[3, 6]);
        for (alpha, teacher, what) in [
            (0.0, &z_old, "alpha = 0"),
            (1.3, &z_new, "teacher == student"),
        ] {
            let mut tape = Tape::new();
            let zn = tape.param(z_new.clone()).unwrap();
            let task = tape.cross_entropy(zn, &[0, 5, 2]).unwrap();
            let l = lwf_loss(&mut tape, task, zn, teacher, 2.0, alpha, None).unwrap();
            let (lv, tv) = (tape.value(l).item(), tape.value(task).item());
            if lv != tv {
                fails.push(format!("LwF {what}: loss {lv} != task loss {tv}"));
            }
        }
    }
    fails
}

fn hat_oracle_failures() -> Vec<String> {
    let mut fails = Vec::new();
    let set = StrategySet::of(&[Strategy::Hat]);
    for arch in Architecture::ALL {
        let mut model = Model::build(tiny(arch, 4), 2).unwrap();
        let sp = StrategyParams {
            s: 3.0,
            ..StrategyParams::default()
        };
        let mut state = StrategyState::new(&set, &sp, &model, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Monotone cumulative masks over random task embeddings.
        {
            let hat = state.hat.as_mut().unwrap();
            let mut prev = hat.cumulative().to_vec();
            for t in 1..=4 {
                let e: Vec<Vec<f64>> = hat
                    .widths()
                    .iter()
                    .map(|&w| (0..w).map(|_| rng.random_range(-2.0..2.0)).collect())
                    .collect();
                hat.set_embeddings(t, e);
                hat_cumulate(hat, t);
                let now = hat.cumulative().to_vec();
                if prev
                    .iter()
                    .flatten()
                    .zip(now.iter().flatten())
                    .any(|(a, b)| b < a || *b > 1.0)
                {
                    fails.push(format!("HAT {arch}: cumulative mask decreased at task {t}"));
                }
                prev = now;
            }
        }
        let mut state = StrategyState::new(&set, &sp, &model, 1);
        let hat = state.hat.as_mut().unwrap();
        let e: Vec<Vec<f64>> = hat
            .widths()
            .iter()
            .map(|&w| (0..w).map(|i| if i == 0 { 40.0 } else { -40.0 }).collect())
            .collect();
        hat.set_embeddings(1, e);
        hat_cumulate(hat, 1);
        if hat.cumulative().iter().any(|m| m[0] != 1.0) {
            fails.push(format!("HAT {arch}: unit 0 not fully claimed"));
            continue;
        }
        let before = model.params().clone();
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.05);
        let items = random_utts(&mut rng, 12, 4);
        for (i, chunk) in items.chunks(4).enumerate() {
            let refs: Vec<&Utterance> = chunk.iter().collect();
            compose_step(
                &mut model,
                &mut opt,
                &mut state,
                &set,
                &sp,
                &refs,
                2,
                &[],
                i as u64,
            )
            .unwrap();
        }
        for g in model.param_gating() {
            let (b, a) = (
                &before.tensors()[g.param],
                &model.params().tensors()[g.param],
            );
            let cols = *b.shape().last().unwrap();
            for k in 0..b.len() {
                let (i, j) = (k % cols, k / cols);
                let protected = match (b.shape().len(), g.out_handle, g.in_handle) {
                    (1, Some(_), _) => i == 0,
                    (2, Some(_), Some(_)) => i == 0 && j == 0,
                    (2, Some(_), None) => i == 0,
                    (2, None, Some(_)) => j == 0,
                    _ => false,
                };
                if protected && a.data()[k].to_bits() != b.data()[k].to_bits() {
                    fails.push(format!(
                        "HAT {arch}: protected entry {k} of parameter {} moved",
                        g.param
                    ));
                }
            }
        }
    }
    fails
}

fn criterion_3_strategy_oracles() -> Vec<String> {
    let mut fails = mir_oracle_failures();
    fails.extend(lwf_oracle_failures());
    fails.extend(hat_oracle_failures());
    fails
}

// ---------- 4 to 7: desk-scale grid on CLINC150 ----------

struct Desk {
    records: Vec<RunRecord>,
}

impl Desk {
    fn get(&self, arch: Architecture, joint: bool, set: &StrategySet) -> &RunRecord {
        self.records
            .iter()
            .find(|r| {
                r.config.architecture == arch
                    && r.config.joint == joint
                    && (joint || &r.config.strategies == set)
            })
            .expect("grid covers every cell")
    }

    fn naive(&self, arch: Architecture) -> &RunRecord {
        self.get(arch, false, &StrategySet::naive())
    }
}

fn desk_hyperparameters() -> Hyperparameters {
    Hyperparameters {
        optimizer: OptimizerKind::Adam,
        learning_rate: 1e-3,
        batch_size: 32,
        max_epochs: 30,
        patience: 3,
        ..Hyperparameters::default()
    }
}

fn build_desk() -> Result<Desk, String> {
    let data = std::env::var_os("FORGETBENCH_DATA").ok_or(
        "FORGETBENCH_DATA is not set; the CLINC150 data_full.json is required for this criterion",
    )?;
    let raw = load_clinc150(Path::new(&data))
        .map_err(|e| format!("loading {}: {e}", PathBuf::from(&data).display()))?;
    let opts = PrepareOptions {
        num_tasks: 10,
        seed: 42,
        subset_per_class: Some(50),
        ..PrepareOptions::default()
    };
    let prepared = prepare(&raw, &opts).map_err(|e| e.to_string())?;
    // Cached runs are keyed by the corpus so a different file never reuses them.
    let key = &Manifest::of(&prepared).vocab_hash[..16];
    let root = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance_desk")
        .join(key);
    let tasks = root.join("tasks");
    save_prepared(&tasks, &prepared).map_err(|e| e.to_string())?;

    let mut strategies: Vec<Value> = vec![json!("joint")];
    strategies.extend(
        StrategySet::all_subsets()
            .iter()
            .map(|s| json!(s.to_string())),
    );
    let grid: GridConfig = serde_json::from_value(json!({
        "architectures": ["ann", "gru", "transformer"],
        "strategies": strategies,
        "seeds": [42],
        "hyperparameters": desk_hyperparameters(),
        "data_dir": tasks,
        "out_dir": root.join("runs"),
    }))
    .map_err(|e| e.to_string())?;
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let outcomes = run_grid(&grid, false, jobs).map_err(|e| e.to_string())?;
    for o in &outcomes {
        let m = &o.record.metrics;
        println!(
            "{}: AA {:.4} avg BWT acc {:?}",
            o.record.config.cell_id(),
            m.aa,
            m.avg_bwt_acc
        );
    }
    Ok(Desk {
        records: outcomes.into_iter().map(|o| o.record).collect(),
    })
}

fn desk() -> &'static Result<Desk, String> {
    static DESK: OnceLock<Result<Desk, String>> = OnceLock::new();
    DESK.get_or_init(build_desk)
}

fn with_desk(check: impl FnOnce(&Desk) -> Vec<String>) -> Vec<String> {
    match desk() {
        Ok(d) => check(d),
        Err(reason) => vec![reason.clone()],
    }
}

fn criterion_4_naive_collapse() -> Vec<String> {
    with_desk(|d| {
        let mut fails = Vec::new();
        for arch in Architecture::ALL {
            let r = d.naive(arch);
            let aa = r.metrics.aa;
            let bwt = r.metrics.avg_bwt_acc.unwrap_or(f64::NAN);
            if aa > 0.20 {
                fails.push(format!("{arch}: AA {aa:.4} > 0.20"));
            }
            if !(bwt <= -0.6) {
                fails.push(format!("{arch}: avg BWT acc {bwt:.4} > -0.6"));
            }
            for t in 1..=r.matrix.tasks() {
                let diag = r.matrix.get(Metric::Accuracy, t, t).unwrap();
                if diag < 0.5 {
                    fails.push(format!("{arch}: R[{t},{t}] = {diag:.4} < 0.5"));
                }
            }
        }
        fails
    })
}

fn criterion_5_joint_naive_gap() -> Vec<String> {
    with_desk(|d| {
        let mut fails = Vec::new();
        for arch in Architecture::ALL {
            let joint = d.get(arch, true, &StrategySet::naive()).metrics.aa;
            let naive = d.naive(arch).metrics.aa;
            if joint - naive < 0.4 {
                fails.push(format!("{arch}: joint {joint:.4} - naive {naive:.4} < 0.4"));
            }
        }
        fails
    })
}

fn criterion_6_replay_primacy() -> Vec<String> {
    with_desk(|d| {
        let mut fails = Vec::new();
        for arch in Architecture::ALL {
            let best = |with_mir: bool| {
                StrategySet::all_subsets()
                    .into_iter()
                    .filter(|s| s.contains(Strategy::Mir) == with_mir)
                    .map(|s| (d.get(arch, false, &s).metrics.aa, s.to_string()))
                    .fold((f64::NEG_INFINITY, String::new()), |a, b| {
                        if b.0 > a.0 {
                            b
                        } else {
                            a
                        }
                    })
            };
            let (with, without) = (best(true), best(false));
            if with.0 <= without.0 {
                fails.push(format!(
                    "{arch}: best with MIR {} ({:.4}) <= best without {} ({:.4})",
                    with.1, with.0, without.1, without.0
                ));
            }
        }
        fails
    })
}

fn criterion_7_mir_hat_on_ann() -> Vec<String> {
    with_desk(|d| {
        let mut fails = Vec::new();
        let naive = d.naive(Architecture::Ann).metrics.aa;
        let r = d.get(
            Architecture::Ann,
            false,
            &StrategySet::of(&[Strategy::Mir, Strategy::Hat]),
        );
        let (aa, bwt) = (r.metrics.aa, r.metrics.avg_bwt_acc.unwrap_or(f64::NAN));
        if aa < naive + 0.3 {
            fails.push(format!("AA {aa:.4} < naive {naive:.4} + 0.3"));
        }
        if !(bwt >= -0.15) {
            fails.push(format!("avg BWT acc {bwt:.4} < -0.15"));
        }
        fails
    })
}

// ---------- 8: determinism ----------

fn criterion_8_determinism() -> Vec<String> {
    let dir = tempfile::tempdir().unwrap();
    let tasks = prepare_fixture(dir.path());
    let hyper: Hyperparameters = serde_json::from_value(small_hyperparameters()).unwrap();
    let mut fails = Vec::new();
    for arch in Architecture::ALL {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let mut cfg = ExperimentConfig::new(
                arch,
                StrategySet::of(&[Strategy::Mir, Strategy::Lwf, Strategy::Hat]),
                tasks.clone(),
                dir.path().join(format!("runs{rep}")),
            );
            cfg.hyperparameters = hyper.clone();
            cfg.seed = 17;
            let data = forgetbench::trainer::load_data(&cfg).unwrap();
            forgetbench::trainer::run_cell(&cfg, &data, false).unwrap();
            bytes.push(std::fs::read(RunDir::new(cfg.run_dir()).acc_path()).unwrap());
        }
        if bytes[0] != bytes[1] {
            fails.push(format!("{arch}: r_acc.csv differs between identical runs"));
        }
    }
    fails
}

// ---------- 9: end-to-end smoke ----------

fn criterion_9_end_to_end_smoke() -> Vec<String> {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let tasks = prepare_fixture(dir.path());
    let runs = dir.path().join("runs");
    let grid = write_json(
        &dir.path().join("grid.json"),
        &json!({
            "architectures": ["ann", "gru", "transformer"],
            "strategies": ["naive", "mir", "mir+hat"],
            "seeds": [1],
            "hyperparameters": small_hyperparameters(),
            "data_dir": tasks,
            "out_dir": runs,
        }),
    );
    let mut fails = Vec::new();
    let o = run(&["run", "--grid", grid.to_str().unwrap()]);
    if !o.status.success() {
        fails.push(format!("run failed: {}", stderr(&o)));
    }
    let report = dir.path().join("report");
    let o = run(&[
        "report",
        "--runs",
        runs.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    if !o.status.success() {
        fails.push(format!("report failed: {}", stderr(&o)));
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(300) {
        fails.push(format!("took {elapsed:?}"));
    }
    if fails.is_empty() {
        let rows: Value =
            serde_json::from_slice(&std::fs::read(report.join("summary.json")).unwrap()).unwrap();
        let rows = rows.as_array().unwrap();
        if rows.len() != 9 {
            fails.push(format!("{} summary rows", rows.len()));
        }
        for r in rows {
            let id = r["cell_id"].as_str().unwrap();
            let metrics: Value =
                serde_json::from_slice(&std::fs::read(runs.join(id).join("metrics.json")).unwrap())
                    .unwrap();
            if r["aa"] != metrics["aa"] || r["tasks"] != 3 {
                fails.push(format!("{id}: summary row does not match metrics.json"));
            }
            let svg = std::fs::read_to_string(report.join("curves").join(format!("{id}.svg")))
                .unwrap_or_default();
            if !svg.starts_with("<svg") {
                fails.push(format!("{id}: missing curve chart"));
            }
        }
        let best: Value =
            serde_json::from_slice(&std::fs::read(report.join("best.json")).unwrap()).unwrap();
        if best.as_array().map(Vec::len) != Some(3) {
            fails.push("best-per-architecture table does not have 3 rows".into());
        }
    }
    fails
}

// ---------- runner ----------

type Criterion = (u32, &'static str, fn() -> Vec<String>);

const CRITERIA: [Criterion; 9] = [
    (1, "metric oracle suite", criterion_1_metric_oracles),
    (2, "gradient suite", criterion_2_gradient_suite),
    (3, "strategy oracles", criterion_3_strategy_oracles),
    (4, "naive collapse", criterion_4_naive_collapse),
    (5, "joint-naive gap", criterion_5_joint_naive_gap),
    (6, "replay primacy", criterion_6_replay_primacy),
    (7, "MIR+HAT on ANN", criterion_7_mir_hat_on_ann),
    (8, "determinism", criterion_8_determinism),
    (9, "end-to-end smoke", criterion_9_end_to_end_smoke),
];

fn panic_message(e: &(dyn std::any::Any + Send)) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "non-string panic payload".into())
}

fn main() -> std::process::ExitCode {
    // `cargo test -- <filter>` runs only the criteria whose number or name matches.
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (n, name, run) in CRITERIA {
        let id = format!("criterion_{n} {name}");
        if !filters.is_empty() && !filters.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        let fails = std::panic::catch_unwind(run)
            .unwrap_or_else(|e| vec![format!("panicked: {}", panic_message(e.as_ref()))]);
        if fails.is_empty() {
            println!("criterion {n} ({name}): PASS");
        } else {
            failed += 1;
            println!("criterion {n} ({name}): FAIL");
            for f in &fails {
                println!("  {f}");
            }
        }
    }
    if failed == 0 {
        std::process::ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        std::process::ExitCode::FAILURE
    }
}
