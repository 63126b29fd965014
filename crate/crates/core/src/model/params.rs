use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Named learnable arrays in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> usize {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }

    pub fn normal<R: Rng>(&mut self, name: &str, shape: &[usize], std: f32, rng: &mut R) -> usize {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| rng.sample::<f32, _>(StandardNormal) * std)
            .collect();
        self.insert(name, Tensor::new(shape.to_vec(), data).expect("shape"))
    }

    pub fn filled(&mut self, name: &str, shape: &[usize], value: f32) -> usize {
        let n: usize = shape.iter().product();
        self.insert(name, Tensor::new(shape.to_vec(), vec![value; n]).expect("shape"))
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

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces every array, checking names and shapes against the current layout.
    pub fn replace_all(&mut self, named: Vec<(String, Tensor)>) -> Result<()> {
        if named.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} arrays, found {}",
                self.len(),
                named.len()
            )));
        }
        for (i, (name, t)) in named.iter().enumerate() {
            if *name != self.names[i] {
                return Err(Error::Checkpoint(format!(
                    "array {i} is {name:?}, expected {:?}",
                    self.names[i]
                )));
            }
            if t.shape() != self.tensors[i].shape() {
                return Err(Error::Checkpoint(format!(
                    "array {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    self.tensors[i].shape()
                )));
            }
        }
        self.tensors = named.into_iter().map(|(_, t)| t).collect();
        Ok(())
    }

    /// Places every parameter on `tape`: differentiable when `trainable`,
    /// constants otherwise.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.variable(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        Bound { vars }
    }
}

/// Tape handles of a [`ParamStore`], index-aligned with it.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, i: usize) -> Var {
        self.vars[i]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
