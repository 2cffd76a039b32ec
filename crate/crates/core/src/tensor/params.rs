//! Trainable parameter storage, bound to a fresh tape on each forward pass.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::{Gradients, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    /// Momentum buffer of the optimizer (first moment for Adam).
    pub velocity: Tensor<T>,
    /// Running mean of squared gradients, used by Adam only.
    pub second_moment: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct ParamStore<T = f64> {
    params: Vec<Param<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        let zeros = Tensor::zeros(value.shape());
        self.params.push(Param { name, grad: zeros.clone(), velocity: zeros.clone(), second_moment: zeros, value });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Records every parameter as a gradient-tracking leaf of `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound { vars: self.params.iter().map(|p| tape.variable(p.value.clone())).collect() }
    }

    /// Records every parameter as a constant: no gradient reaches it.
    pub fn bind_frozen<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound { vars: self.params.iter().map(|p| tape.constant(p.value.clone())).collect() }
    }

    /// Adds the gradients of a bound pass into the `grad` buffers.
    pub fn accumulate(&mut self, bound: &Bound<'_, T>, grads: &Gradients<T>) {
        for (p, v) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(g) = grads.get(*v) {
                p.grad.add_assign(g);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                    velocity: p.velocity.cast(),
                    second_moment: p.second_moment.cast(),
                })
                .collect(),
        }
    }

    /// Copies values from `other`, matching by name and shape.
    pub fn load_values(&mut self, other: &[(String, Tensor<f64>)]) -> Result<()> {
        if other.len() != self.params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameters, model expects {}",
                other.len(),
                self.params.len()
            )));
        }
        for (name, value) in other {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Format(format!("unknown parameter {name} in checkpoint")))?;
            let p = &mut self.params[id.0];
            if p.value.shape() != value.shape() {
                return Err(Error::Format(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                    value.shape(),
                    p.value.shape()
                )));
            }
            p.value = value.cast();
        }
        Ok(())
    }

    /// Hash of all parameter names and value bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in &self.params {
            p.name.hash(&mut h);
            p.value.shape().hash(&mut h);
            for v in p.value.data() {
                v.f64().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Tape handles for every parameter of a store, indexed by [`ParamId`].
pub struct Bound<'t, T: Real> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Real> Bound<'t, T> {
    pub fn get(&self, id: ParamId) -> Var<'t, T> {
        self.vars[id.0]
    }
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_fan_in<T: Real>(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::c(rng::uniform(rng, -bound, bound)))
}

/// Normal(0, std) truncated at two standard deviations.
pub fn init_trunc_normal<T: Real>(rng: &mut Rng, shape: &[usize], std: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::c(rng::trunc_normal(rng, std)))
}
