use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// Which trainable block a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Generator,
    Classifier,
    Discriminator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: Group,
    pub value: Tensor,
}

/// Ordered, named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    params: Vec<Param>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, group: Group, value: Tensor) -> usize {
        let name = name.into();
        assert!(self.index_of(&name).is_none(), "duplicate parameter `{name}`");
        self.params.push(Param { name, group, value });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param {
        &mut self.params[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> &Tensor {
        &self
            .by_name(name)
            .unwrap_or_else(|| panic!("no parameter named `{name}`"))
            .value
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copy of the parameters belonging to `group`, in order.
    pub fn group_values(&self, group: Group) -> Vec<Tensor> {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.value.clone())
            .collect()
    }

    /// Rounds every value to the nearest `f32`, so a 32-bit round trip is lossless.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            for v in p.value.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// Gradients aligned with a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub grads: Vec<Tensor>,
    /// Indices of trainable parameters the loss does not depend on; their
    /// gradient is reported as zero.
    pub disconnected: Vec<usize>,
}

impl ParamGrads {
    pub fn get(&self, i: usize) -> &Tensor {
        &self.grads[i]
    }
}
