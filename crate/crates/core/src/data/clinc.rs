use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// In-scope split sizes of the published full CLINC150 file.
pub const EXPECTED_COUNTS: [usize; 3] = [15_000, 3_000, 4_500];

const OOS_LABEL: &str = "oos";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawExample {
    pub text: String,
    pub intent: String,
}

/// In-scope train/val/test examples; out-of-scope data is dropped.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawSplits {
    pub train: Vec<RawExample>,
    pub val: Vec<RawExample>,
    pub test: Vec<RawExample>,
    /// Out-of-scope examples discarded per split (train, val, test).
    pub oos_dropped: [usize; 3],
}

impl RawSplits {
    pub fn intents(&self) -> impl Iterator<Item = &str> {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .map(|e| e.intent.as_str())
    }
}

pub fn load_clinc150(path: &Path) -> Result<RawSplits> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    parse_clinc150(&doc)
}

/// Reads the `data_full.json` layout: keys `train`, `val`, `test` (and the
/// optional `oos_*` splits), each a list of `[text, intent]` pairs. A count
/// mismatch against the published sizes is logged, not rejected, so that
/// subsets and fixtures load.
pub fn parse_clinc150(doc: &Value) -> Result<RawSplits> {
    let mut out = RawSplits::default();
    for (i, key) in ["train", "val", "test"].into_iter().enumerate() {
        let list = doc
            .get(key)
            .ok_or_else(|| Error::Data(format!("missing split {key:?}")))?;
        let examples = parse_pairs(key, list)?;
        let total = examples.len();
        let kept: Vec<RawExample> = examples
            .into_iter()
            .filter(|e| e.intent != OOS_LABEL)
            .collect();
        out.oos_dropped[i] = total - kept.len();
        match i {
            0 => out.train = kept,
            1 => out.val = kept,
            _ => out.test = kept,
        }
        if let Some(list) = doc.get(format!("oos_{key}")) {
            out.oos_dropped[i] += parse_pairs(key, list)?.len();
        }
    }
    let got = [out.train.len(), out.val.len(), out.test.len()];
    if got != EXPECTED_COUNTS {
        log::warn!(
            "in-scope split sizes {got:?} differ from the published {EXPECTED_COUNTS:?}; treating input as a subset"
        );
    }
    Ok(out)
}

fn parse_pairs(key: &str, list: &Value) -> Result<Vec<RawExample>> {
    let items = list
        .as_array()
        .ok_or_else(|| Error::Data(format!("split {key:?} is not a list")))?;
    items
        .iter()
        .enumerate()
        .map(|(i, pair)| match pair.as_array().map(Vec::as_slice) {
            Some([Value::String(text), Value::String(intent)]) => Ok(RawExample {
                text: text.clone(),
                intent: intent.clone(),
            }),
            _ => Err(Error::Data(format!(
                "split {key:?} entry {i} is not a [text, intent] pair"
            ))),
        })
        .collect()
}
