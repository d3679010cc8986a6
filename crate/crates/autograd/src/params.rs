use crate::element::Element;
use crate::error::{AutogradError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet<T: Element> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Element> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Registers a parameter and returns its index.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor.with_requires_grad(true));
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn get(&self, i: usize) -> &Tensor<T> {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.tensors[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Places every parameter on `graph` as a gradient-tracking leaf.
    pub fn bind(&self, graph: &mut Graph<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| graph.leaf(t.clone())).collect()
    }

    /// Like [`bind`](Self::bind) but as constants (inference, frozen modules).
    pub fn bind_frozen(&self, graph: &mut Graph<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| graph.input(t.clone())).collect()
    }

    /// Adds the gradients held by `graph` for `vars` into each tensor's `grad`.
    pub fn accumulate_grads(&mut self, graph: &Graph<T>, vars: &[Var]) {
        for (t, &v) in self.tensors.iter_mut().zip(vars) {
            let Some(g) = graph.grad(v) else { continue };
            match t.grad.as_mut() {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
                None => t.grad = Some(g.to_vec()),
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Replaces the values of every parameter from `(name, tensor)` entries.
    /// Names and shapes must match exactly.
    pub fn load_from(&mut self, entries: &[(String, Tensor<T>)]) -> Result<()> {
        for (name, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            let (_, src) = entries.iter().find(|(n, _)| n == name).ok_or_else(|| {
                AutogradError::Checkpoint(format!("missing parameter `{name}`"))
            })?;
            if src.shape() != t.shape() {
                return Err(AutogradError::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            t.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// Named values without gradient state.
    pub fn to_entries(&self) -> Vec<(String, Tensor<T>)> {
        self.names
            .iter()
            .cloned()
            .zip(self.tensors.iter().map(|t| {
                let mut t = t.clone();
                t.zero_grad();
                t
            }))
            .collect()
    }
}
