use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameters with gradient accumulators, kept in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name '{name}'")));
        }
        let id = ParamId(self.params.len());
        self.params.push(Param {
            grad: Tensor::zeros_like(&value),
            name: name.clone(),
            value,
        });
        self.index.insert(name, id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn accumulate(&mut self, id: ParamId, delta: &Tensor) -> Result<()> {
        self.params[id.0].grad.add_assign(delta)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            p.grad.scale(factor);
        }
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            params: self
                .params
                .iter()
                .map(|p| CheckpointParam {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Overwrites values from a checkpoint. Every stored parameter must be
    /// present with the same shape, and vice versa.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        if ckpt.params.len() != self.params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameters, model expects {}",
                ckpt.params.len(),
                self.params.len()
            )));
        }
        for cp in &ckpt.params {
            let id = self
                .id(&cp.name)
                .ok_or_else(|| Error::Config(format!("unknown parameter '{}' in checkpoint", cp.name)))?;
            let value = Tensor::from_vec(cp.shape.clone(), cp.data.clone())?;
            if value.shape() != self.value(id).shape() {
                return Err(Error::Config(format!(
                    "parameter '{}' has shape {:?} in checkpoint, model expects {:?}",
                    cp.name,
                    value.shape(),
                    self.value(id).shape()
                )));
            }
            value.ensure_finite(&cp.name)?;
            *self.value_mut(id) = value;
        }
        Ok(())
    }
}

/// Serialized parameter values: name, shape and row-major data, in the
/// store's insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: Vec<CheckpointParam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(s.add("w", Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_and_shape_check() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::vector(vec![1.0, 2.0])).unwrap();
        s.add("b", Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap()).unwrap();
        let ck = s.to_checkpoint();
        let json = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ck);

        let mut t = ParamStore::new();
        t.add("a", Tensor::zeros(&[2])).unwrap();
        t.add("b", Tensor::zeros(&[1, 2])).unwrap();
        t.load_checkpoint(&back).unwrap();
        assert_eq!(t.value(a).data(), &[1.0, 2.0]);

        let mut wrong = ParamStore::new();
        wrong.add("a", Tensor::zeros(&[3])).unwrap();
        wrong.add("b", Tensor::zeros(&[1, 2])).unwrap();
        assert!(wrong.load_checkpoint(&back).is_err());
    }
}
