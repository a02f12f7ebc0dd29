//! Named parameter registry shared by all models.
//!
//! Names are slash-free dotted paths ("layer0.attn.q.lora_a"); LoRA tensors
//! are identifiable as a group by their ".lora_a"/".lora_b" suffix so they
//! can be frozen or excluded together.

use super::scalar::Scalar;
use crate::{Error, Result};
use std::collections::HashMap;

pub struct Param<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<S>,
    /// Whether the current training phase updates this tensor.
    pub trainable: bool,
}

pub const LORA_SUFFIXES: [&str; 2] = [".lora_a", ".lora_b"];

pub fn is_lora_name(name: &str) -> bool {
    LORA_SUFFIXES.iter().any(|s| name.ends_with(s))
}

pub struct ParamStore<S> {
    params: Vec<Param<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        value: Vec<S>,
        trainable: bool,
    ) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        if shape.iter().product::<usize>() != value.len() {
            return Err(Error::Dimension {
                op: "param",
                lhs: shape,
                rhs: vec![value.len()],
            });
        }
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            shape,
            value,
            trainable,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Param<S> {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param<S> {
        &mut self.params[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<S>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.params.iter()
    }

    pub fn params_mut(&mut self) -> &mut [Param<S>] {
        &mut self.params
    }

    pub fn set_trainable<F: Fn(&str) -> bool>(&mut self, pred: F) {
        for p in &mut self.params {
            p.trainable = pred(&p.name);
        }
    }

    pub fn n_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Zero every LoRA tensor in place (the disable-and-restore path).
    pub fn zero_lora(&mut self) {
        for p in &mut self.params {
            if is_lora_name(&p.name) {
                p.value.iter_mut().for_each(|v| *v = S::zero());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names() {
        let mut s = ParamStore::<f64>::new();
        s.add("a.w", vec![2], vec![0.0, 1.0], true).unwrap();
        assert!(s.add("a.w", vec![1], vec![0.0], true).is_err());
    }

    #[test]
    fn lora_names_form_a_group() {
        assert!(is_lora_name("layer0.attn.q.lora_a"));
        assert!(is_lora_name("layer3.mlp.fc2.lora_b"));
        assert!(!is_lora_name("layer0.attn.q.w"));
    }
}
