use std::collections::HashSet;

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkParams {
    entries: Vec<(String, Tensor)>,
}

impl NetworkParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::Contract(format!("duplicate parameter name `{name}`")));
        }
        self.entries.push((name, tensor.with_requires_grad(true)));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// Records every parameter as a differentiable leaf, in order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| tape.variable(t.clone())).collect()
    }

    /// Records every parameter as a constant leaf (inference only).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| tape.constant(t.clone())).collect()
    }

    /// Copies gradients for bound vars into each tensor's grad buffer;
    /// parameters the root does not reach get zeros.
    pub fn load_grads(&mut self, grads: &Gradients, vars: &[Var]) -> Result<()> {
        if vars.len() != self.entries.len() {
            return Err(Error::dim("load_grads", &[self.entries.len()], &[vars.len()]));
        }
        for ((_, t), v) in self.entries.iter_mut().zip(vars) {
            let g = grads.wrt_or_zero(*v, t.len());
            t.set_grad(g)?;
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        self.entries.iter_mut().for_each(|(_, t)| t.clear_grad());
    }

    /// Flattened values, in entry order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|(_, t)| t.data().iter().copied())
            .collect()
    }

    /// Flattened gradients; missing grads read as zeros.
    pub fn flatten_grads(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|(_, t)| match t.grad() {
                Some(g) => g.to_vec(),
                None => vec![0.0; t.len()],
            })
            .collect()
    }

    /// Checks that `other` has the same names and shapes in the same order.
    pub fn check_layout(&self, other: &NetworkParams) -> Result<()> {
        for (name, t) in &self.entries {
            match other.get(name) {
                None => return Err(Error::MissingParam(name.clone())),
                Some(o) if o.shape() != t.shape() => {
                    return Err(Error::ParamShape {
                        name: name.clone(),
                        expected: t.shape().to_vec(),
                        actual: o.shape().to_vec(),
                    })
                }
                Some(_) => {}
            }
        }
        let names: HashSet<&str> = self.entries.iter().map(|(n, _)| n.as_str()).collect();
        if let Some((extra, _)) = other.entries.iter().find(|(n, _)| !names.contains(n.as_str())) {
            return Err(Error::Architecture(format!("unexpected parameter `{extra}`")));
        }
        Ok(())
    }

    /// Returns a copy reordered to match `self`'s layout.
    pub fn aligned_from(&self, other: &NetworkParams) -> Result<NetworkParams> {
        self.check_layout(other)?;
        let mut out = NetworkParams::new();
        for (name, _) in &self.entries {
            out.push(name.clone(), other.get(name).expect("checked").clone())?;
        }
        Ok(out)
    }
}
