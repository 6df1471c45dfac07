//! Parameter checkpoints.
//!
//! Format: a JSON object
//! `{"format": "forgetbench.params.v1", "params": {"<name>": {"shape": [..], "data": [..]}}}`
//! with parameter names sorted and `data` in row-major order. Floats are
//! written in shortest round-trip form, so reloading is bit-exact.

use std::path::Path;

use serde_json::json;

use super::Params;
use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "forgetbench.params.v1";

pub fn save_params(path: &Path, params: &Params) -> Result<()> {
    let doc = json!({ "format": PARAMS_FORMAT, "params": params.to_json() });
    let text = serde_json::to_string(&doc).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint into the layout of `template` (usually the model's own
/// parameters).
pub fn load_params(path: &Path, template: &Params) -> Result<Params> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if doc.get("format").and_then(|f| f.as_str()) != Some(PARAMS_FORMAT) {
        return Err(Error::Data(format!(
            "{}: not a {PARAMS_FORMAT} file",
            path.display()
        )));
    }
    Params::from_json(template, doc["params"].take())
}
