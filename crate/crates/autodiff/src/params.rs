use std::collections::HashMap;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors in insertion order, each with an accumulated gradient.
#[derive(Debug, Clone)]
pub struct ParameterStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Vec<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParameterStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore { names: Vec::new(), values: Vec::new(), grads: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return invalid(format!("duplicate parameter name {name:?}"));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.grads.push(vec![T::zero(); value.len()]);
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.grads[id.0]
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.grads[id.0]
    }

    pub(crate) fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor<T>, &[T]) {
        (&mut self.values[id.0], &self.grads[id.0])
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
    }

    /// Total scalar count over all tensors.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn numel_with_prefix(&self, prefix: &str) -> usize {
        self.ids().filter(|&id| self.name(id).starts_with(prefix)).map(|id| self.value(id).len()).sum()
    }

    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.ids().filter(move |&id| self.name(id).starts_with(prefix))
    }

    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        ParameterStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            grads: self.values.iter().map(|v| vec![U::zero(); v.len()]).collect(),
            index: self.index.clone(),
        }
    }
}

/// He-uniform fan-in init: `U(-sqrt(6/fan_in), sqrt(6/fan_in)) * gain`.
pub fn he_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, gain: f64, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt() * gain;
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::cast(rng.gen_range(-bound..=bound))).collect();
    Tensor::from_parts(shape.to_vec(), data)
}
