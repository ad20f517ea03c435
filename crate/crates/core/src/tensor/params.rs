use std::collections::HashMap;

use super::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// A named trainable tensor, e.g. `encoder.0.self_attn.w_q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of uniquely named parameters.
///
/// Insertion order is preserved and defines checkpoint layout and the
/// order in which optimizer state is kept.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParameters {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ModelParameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Parameter {
            name,
            tensor: tensor.with_grad(),
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .map(|p| &p.tensor)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Drops every gradient buffer, leaving values only.
    pub fn clear_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.clear_grad());
    }

    /// Records every parameter on `tape` as a trainable leaf.
    pub fn bind<'p>(&'p self, tape: &mut Tape) -> BoundParams<'p> {
        let vars = self.params.iter().map(|p| tape.leaf(&p.tensor)).collect();
        BoundParams { params: self, vars }
    }

    /// Adds the gradients of a backward sweep into each parameter's buffer.
    pub fn accumulate_grads(&mut self, bound_vars: &[Var], grads: &Gradients) -> Result<()> {
        if bound_vars.len() != self.params.len() {
            return Err(Error::contract("binding does not match this parameter set"));
        }
        for (p, v) in self.params.iter_mut().zip(bound_vars) {
            match grads.get(*v) {
                Some(g) => p.tensor.accumulate_grad(g)?,
                None => {
                    let zeros = vec![0.0; p.tensor.len()];
                    p.tensor.accumulate_grad(&zeros)?;
                }
            }
        }
        Ok(())
    }
}

/// Parameters recorded on a particular tape.
pub struct BoundParams<'p> {
    params: &'p ModelParameters,
    vars: Vec<Var>,
}

impl BoundParams<'_> {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.params
            .index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn into_vars(self) -> Vec<Var> {
        self.vars
    }
}
