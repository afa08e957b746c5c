use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::Tensor;
use crate::{Error, Result, Scalar};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    lookup: HashMap<String, ParamId>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            lookup: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::contract(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.values.len());
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            lookup: self.lookup.clone(),
        }
    }
}

/// Gradients keyed by parameter, accumulated during a backward pass.
#[derive(Debug, Clone)]
pub struct GradientTape<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> GradientTape<T> {
    pub fn for_store(store: &ParamStore<T>) -> Self {
        GradientTape {
            grads: vec![None; store.len()],
        }
    }

    /// Adds `g` into the gradient of `id`.
    pub fn accumulate(&mut self, id: ParamId, g: Tensor<T>) -> Result<()> {
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    pub fn accumulate_slice(&mut self, id: ParamId, shape: [usize; 4], g: Vec<T>) -> Result<()> {
        self.accumulate(id, Tensor::from_vec(shape, g)?)
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Fills every missing gradient with zeros (for parameters a batch did not reach).
    pub fn fill_missing(&mut self, store: &ParamStore<T>) {
        for (slot, (_, _, v)) in self.grads.iter_mut().zip(store.iter()) {
            if slot.is_none() {
                *slot = Some(Tensor::zeros(v.shape()));
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::all_finite)
    }
}

/// Zero-mean Gaussian tensor.
pub fn gaussian<T: Scalar, R: Rng + ?Sized>(shape: [usize; 4], std: f64, rng: &mut R) -> Tensor<T> {
    let normal = Normal::new(0.0, std).expect("std is finite and non-negative");
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::lit(normal.sample(rng))).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// He-style standard deviation `sqrt(2 / fan_in)` for a weight of the given shape.
pub fn he_std(shape: [usize; 4]) -> f64 {
    let fan_in = shape[1] * shape[2] * shape[3];
    (2.0 / fan_in.max(1) as f64).sqrt()
}
