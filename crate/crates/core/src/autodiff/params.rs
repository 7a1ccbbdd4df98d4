use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hash, Hasher};

use indexmap::IndexMap;

use super::{AutodiffError, Tensor};

/// Named model parameters with a frozen/trainable partition.
///
/// Insertion order is preserved; it is the order used by checkpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: IndexMap<String, Tensor>,
    frozen: BTreeSet<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn frozen(&self) -> &BTreeSet<String> {
        &self.frozen
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) -> Result<(), AutodiffError> {
        if !self.tensors.contains_key(name) {
            return Err(AutodiffError::UnknownParameter(name.to_string()));
        }
        if frozen {
            self.frozen.insert(name.to_string());
        } else {
            self.frozen.remove(name);
        }
        Ok(())
    }

    pub fn unfreeze_all(&mut self) {
        self.frozen.clear();
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.tensors
            .keys()
            .filter(|k| !self.frozen.contains(*k))
            .map(String::as_str)
    }

    /// Stable digest of every value bit, frozen flag and name.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        for (name, tensor) in &self.tensors {
            name.hash(&mut hasher);
            tensor.shape().hash(&mut hasher);
            self.frozen.contains(name).hash(&mut hasher);
            for v in tensor.data() {
                v.to_bits().hash(&mut hasher);
            }
        }
        hasher.finish()
    }

    /// Largest absolute elementwise difference over shared parameters.
    pub fn max_abs_diff(&self, other: &ParamStore) -> f64 {
        self.tensors
            .iter()
            .filter_map(|(name, t)| other.get(name).map(|o| (t, o)))
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Gradients keyed by parameter name. Only trainable parameters appear.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientMap {
    entries: BTreeMap<String, Tensor>,
}

impl GradientMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero gradient for every trainable parameter of `store`.
    pub fn zeros_like(store: &ParamStore) -> Self {
        let entries = store
            .iter()
            .filter(|(name, _)| !store.is_frozen(name))
            .map(|(name, t)| (name.to_string(), Tensor::zeros(t.shape())))
            .collect();
        Self { entries }
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor) {
        self.entries.insert(name.into(), grad);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Elementwise sum; entries missing from `self` are copied in.
    pub fn accumulate(&mut self, other: &GradientMap) -> Result<(), AutodiffError> {
        for (name, g) in &other.entries {
            match self.entries.get_mut(name) {
                Some(acc) => {
                    if acc.shape() != g.shape() {
                        return Err(AutodiffError::ShapeMismatch {
                            name: name.clone(),
                            expected: acc.shape().to_vec(),
                            found: g.shape().to_vec(),
                        });
                    }
                    acc.add_assign(g);
                }
                None => {
                    self.entries.insert(name.clone(), g.clone());
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.entries.values_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(Tensor::all_finite)
    }
}
