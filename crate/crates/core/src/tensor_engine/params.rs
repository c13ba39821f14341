use std::collections::HashMap;

use crate::error::{Error, Result};

use super::graph::{Graph, Var};
use super::tensor::{Real, Tensor};

/// Ordered, named collection of parameter arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
}

impl<T> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`. Replacement keeps the original position.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&i) => self.entries[i].1 = value,
            None => {
                self.index.insert(name.clone(), self.entries.len());
                self.entries.push((name, value));
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| Error::InvalidInput(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for (n, t) in self.iter() {
            out.insert(n, Tensor::zeros(t.shape()));
        }
        out
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (n, t) in self.iter() {
            out.insert(n, t.cast());
        }
        out
    }

    /// Entries whose names start with `prefix`.
    pub fn filter_prefix(&self, prefix: &str) -> Self {
        let mut out = Self::new();
        for (n, t) in self.iter().filter(|(n, _)| n.starts_with(prefix)) {
            out.insert(n, t.clone());
        }
        out
    }

    /// Copies every entry of `other` into `self`.
    pub fn merge(&mut self, other: &ParamStore<T>) {
        for (n, t) in other.iter() {
            self.insert(n, t.clone());
        }
    }

    /// Records every parameter as a tracked leaf of `graph`.
    pub fn bind(&self, graph: &mut Graph<T>) -> BoundParams {
        self.bind_with(graph, true)
    }

    /// Records every parameter as an untracked constant (inference only).
    pub fn bind_frozen(&self, graph: &mut Graph<T>) -> BoundParams {
        self.bind_with(graph, false)
    }

    fn bind_with(&self, graph: &mut Graph<T>, tracked: bool) -> BoundParams {
        let vars = self
            .entries
            .iter()
            .map(|(n, t)| {
                let v = if tracked {
                    graph.param(t.clone())
                } else {
                    graph.constant(t.clone())
                };
                (n.clone(), v)
            })
            .collect();
        BoundParams { vars }
    }

    /// Collects the gradients of a bound store after `graph.backward`.
    /// Parameters the backward sweep never reached get zeros.
    pub fn grads_from(&self, graph: &Graph<T>, bound: &BoundParams) -> Self {
        let mut out = Self::new();
        for (n, t) in self.iter() {
            let g = bound
                .vars
                .get(n)
                .and_then(|&v| graph.grad(v))
                .map(|g| Tensor::new(t.shape().to_vec(), g.to_vec()).expect("grad shape"))
                .unwrap_or_else(|| Tensor::zeros(t.shape()));
            out.insert(n, g);
        }
        out
    }
}

/// Map from parameter name to its leaf in one graph.
#[derive(Clone, Debug, Default)]
pub struct BoundParams {
    vars: HashMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("parameter `{name}` is not bound")))
    }

    pub fn extend(&mut self, other: BoundParams) {
        self.vars.extend(other.vars);
    }
}
