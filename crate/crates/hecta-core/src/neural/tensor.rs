//! Dense row-major tensors and the named parameter store used by every
//! network in this crate.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NeuralError;

/// A shaped, row-major array of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NeuralError> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(NeuralError::ShapeMismatch {
                context: "Tensor::from_vec",
                expected: expect,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Flat named collection of tensors: trainable parameters, their gradients,
/// or optimizer accumulators, depending on use.
///
/// A `clone()` is a deep, independent copy; target networks are exactly that.
/// Iteration order is the lexicographic key order, which keeps every
/// traversal (init, optimizer steps, checkpoints) deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A store with the same keys and shapes, all zeros. Used as a gradient
    /// accumulator.
    pub fn zeros_like(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
            .collect();
        ParamStore { entries }
    }

    /// Accumulate gradient entries into a matching slot of this store.
    pub fn accumulate(&mut self, name: &str, values: &[f64]) {
        let t = self.get_mut(name);
        debug_assert_eq!(t.len(), values.len(), "gradient shape mismatch for {name}");
        for (dst, src) in t.data_mut().iter_mut().zip(values) {
            *dst += src;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(Tensor::all_finite)
    }

    /// Total number of scalar values across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }
}
