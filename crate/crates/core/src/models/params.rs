use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Named parameter tensors in declaration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Params {
    pub fn push(&mut self, name: &str, tensor: Tensor) -> usize {
        assert!(self.index_of(name).is_none(), "duplicate parameter {name}");
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub(crate) fn check_compatible(&self, other: &Params) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Config(
                "parameter names differ from the model".into(),
            ));
        }
        for (n, (a, b)) in self
            .names
            .iter()
            .zip(self.tensors.iter().zip(&other.tensors))
        {
            if a.shape() != b.shape() {
                return Err(Error::shape(
                    "params",
                    format!("{n}: {:?} vs {:?}", a.shape(), b.shape()),
                ));
            }
        }
        Ok(())
    }

    /// `{name: {shape, data}}`, keys sorted.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<&str, Entry> = self
            .names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| {
                (
                    n.as_str(),
                    Entry {
                        shape: t.shape().to_vec(),
                        data: t.data().to_vec(),
                    },
                )
            })
            .collect();
        serde_json::to_value(map).expect("params serialize")
    }

    /// Reads values for every name in `template`, keeping its order.
    pub fn from_json(template: &Params, value: serde_json::Value) -> Result<Params> {
        let mut map: BTreeMap<String, Entry> = serde_json::from_value(value)
            .map_err(|e| Error::Data(format!("parameter map: {e}")))?;
        let mut out = Params::default();
        for (name, t) in template.names.iter().zip(&template.tensors) {
            let e = map
                .remove(name)
                .ok_or_else(|| Error::Data(format!("checkpoint lacks parameter {name}")))?;
            if e.shape != t.shape() {
                return Err(Error::Data(format!(
                    "checkpoint shape {:?} for {name}, model expects {:?}",
                    e.shape,
                    t.shape()
                )));
            }
            out.push(name, Tensor::new(e.shape, e.data)?);
        }
        if let Some(extra) = map.keys().next() {
            return Err(Error::Data(format!(
                "checkpoint has unknown parameter {extra}"
            )));
        }
        Ok(out)
    }
}
