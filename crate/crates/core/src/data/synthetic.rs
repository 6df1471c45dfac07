//! Synthetic corpus in the CLINC150 `data_full.json` layout, for fixtures,
//! examples and smoke runs when the real file is not at hand.
//!
//! Each intent owns a handful of keywords; an utterance mixes two or three of
//! them with filler words shared by all intents and, sometimes, a keyword
//! borrowed from another intent. Intents are therefore learnable but not
//! trivially separable by a single token.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub intents: usize,
    pub train_per_intent: usize,
    pub val_per_intent: usize,
    pub test_per_intent: usize,
    /// Out-of-scope examples per split (train, val, test).
    pub oos: [usize; 3],
    pub keywords_per_intent: usize,
    pub filler_words: usize,
    /// Probability that an utterance carries a keyword of another intent.
    pub confusion: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Same shape as the published corpus: 150 intents with 100/20/30
    /// utterances each and 100/100/1000 out-of-scope examples.
    fn default() -> Self {
        SyntheticSpec {
            intents: 150,
            train_per_intent: 100,
            val_per_intent: 20,
            test_per_intent: 30,
            oos: [100, 100, 1000],
            keywords_per_intent: 6,
            filler_words: 120,
            confusion: 0.3,
            seed: 7,
        }
    }
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

fn word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    (0..syllables)
        .map(|_| {
            format!(
                "{}{}",
                ONSETS.choose(rng).unwrap(),
                VOWELS.choose(rng).unwrap()
            )
        })
        .collect()
}

/// Draws `n` distinct pseudo-words that are not in `taken`.
fn fresh_words(
    rng: &mut ChaCha8Rng,
    n: usize,
    syllables: usize,
    taken: &mut std::collections::HashSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = word(rng, syllables);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub fn generate(spec: &SyntheticSpec) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = std::collections::HashSet::new();
    let filler = fresh_words(&mut rng, spec.filler_words.max(1), 2, &mut taken);
    let keywords: Vec<Vec<String>> = (0..spec.intents)
        .map(|_| fresh_words(&mut rng, spec.keywords_per_intent.max(1), 3, &mut taken))
        .collect();
    let names: Vec<String> = keywords
        .iter()
        .enumerate()
        .map(|(i, k)| format!("{}_{i:03}", k[0]))
        .collect();

    let utterance = |rng: &mut ChaCha8Rng, intent: Option<usize>| -> String {
        let len = rng.random_range(4..=10);
        let mut toks: Vec<String> = (0..len)
            .map(|_| filler.choose(rng).unwrap().clone())
            .collect();
        if let Some(i) = intent {
            for _ in 0..rng.random_range(2..=3) {
                let pos = rng.random_range(0..toks.len());
                toks[pos] = keywords[i].choose(rng).unwrap().clone();
            }
            if spec.intents > 1 && rng.random_bool(spec.confusion.clamp(0.0, 1.0)) {
                let other = (i + rng.random_range(1..spec.intents)) % spec.intents;
                let pos = rng.random_range(0..toks.len());
                toks[pos] = keywords[other].choose(rng).unwrap().clone();
            }
        }
        let mut text = toks.join(" ");
        if rng.random_bool(0.05) {
            text = format!(
                "{}  {} www.example.com/{}",
                text.to_uppercase(),
                toks[0],
                toks[1]
            );
        }
        text
    };

    let mut split = |per: usize, oos: usize| -> (Value, Value) {
        let mut items = Vec::with_capacity(per * spec.intents);
        for _ in 0..per {
            for (i, name) in names.iter().enumerate() {
                items.push(json!([utterance(&mut rng, Some(i)), name]));
            }
        }
        let oos_items: Vec<Value> = (0..oos)
            .map(|_| json!([utterance(&mut rng, None), "oos"]))
            .collect();
        (Value::Array(items), Value::Array(oos_items))
    };
    let (train, oos_train) = split(spec.train_per_intent, spec.oos[0]);
    let (val, oos_val) = split(spec.val_per_intent, spec.oos[1]);
    let (test, oos_test) = split(spec.test_per_intent, spec.oos[2]);
    json!({
        "train": train,
        "val": val,
        "test": test,
        "oos_train": oos_train,
        "oos_val": oos_val,
        "oos_test": oos_test,
    })
}

pub fn write(spec: &SyntheticSpec, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&generate(spec)).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
