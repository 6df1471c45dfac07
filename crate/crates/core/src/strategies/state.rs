//! Strategy checkpoints: one JSON document
//! `{"format": "forgetbench.strategy.v1", "buffer": .., "teacher": .., "hat": ..}`
//! where absent strategies are null and teacher parameters use the layout
//! of the parameter checkpoint.

use std::path::Path;

use serde_json::{json, Value};

use super::{HatState, ReplayBuffer, Strategy, StrategyParams, StrategySet, TeacherSnapshot};
use crate::error::{Error, Result};
use crate::models::{Model, Params};
use crate::seeds;

const STATE_FORMAT: &str = "forgetbench.strategy.v1";

/// Persistent state of the active strategies of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StrategyState {
    pub buffer: Option<ReplayBuffer>,
    pub teacher: Option<TeacherSnapshot>,
    pub hat: Option<HatState>,
}

impl StrategyState {
    pub fn new(set: &StrategySet, params: &StrategyParams, model: &Model, seed: u64) -> Self {
        StrategyState {
            buffer: set
                .contains(Strategy::Mir)
                .then(|| ReplayBuffer::new(params.capacity, seeds::derive(seed, &[0xb0f]))),
            teacher: None,
            hat: set
                .contains(Strategy::Hat)
                .then(|| HatState::new(model.handles(), params.s, seeds::derive(seed, &[0x4a7]))),
        }
    }
}

pub fn save_state(path: &Path, state: &StrategyState) -> Result<()> {
    let to_value = |v: Result<Value, serde_json::Error>| v.map_err(|e| Error::json(path, e));
    let doc = json!({
        "format": STATE_FORMAT,
        "buffer": to_value(serde_json::to_value(&state.buffer))?,
        "teacher": state.teacher.as_ref().map(|t| json!({
            "snapshot_task": t.snapshot_task,
            "params": t.params.to_json(),
        })),
        "hat": to_value(serde_json::to_value(&state.hat))?,
    });
    let text = serde_json::to_string(&doc).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a strategy checkpoint; `template` gives the teacher parameter layout.
pub fn load_state(path: &Path, template: &Params) -> Result<StrategyState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if doc.get("format").and_then(Value::as_str) != Some(STATE_FORMAT) {
        return Err(Error::Data(format!(
            "{}: not a {STATE_FORMAT} file",
            path.display()
        )));
    }
    let buffer = serde_json::from_value(doc["buffer"].take()).map_err(|e| Error::json(path, e))?;
    let hat = serde_json::from_value(doc["hat"].take()).map_err(|e| Error::json(path, e))?;
    let teacher = match doc["teacher"].take() {
        Value::Null => None,
        mut t => Some(TeacherSnapshot {
            snapshot_task: t["snapshot_task"]
                .as_u64()
                .ok_or_else(|| Error::Data("teacher snapshot_task missing".into()))?
                as usize,
            params: Params::from_json(template, t["params"].take())?,
        }),
    };
    Ok(StrategyState {
        buffer,
        teacher,
        hat,
    })
}
