use std::collections::HashMap;

use super::tensor::Tensor;

/// Handle of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    /// Frozen parameters never receive gradients or optimizer updates.
    pub trainable: bool,
    /// Whether the parameter is included in the L2 penalty (weights yes, biases and gains no).
    pub decay: bool,
}

/// Named collection of model parameters.
///
/// The store only holds values. Graphs borrow it immutably while a
/// forward/backward pass is recorded, and the optimizer borrows it mutably
/// once the graph has been dropped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a trainable parameter; matrices and higher-rank tensors are
    /// L2-regularized, vectors are not.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let decay = tensor.shape().len() >= 2;
        self.add_with(name, tensor, true, decay)
    }

    pub fn add_with(
        &mut self,
        name: impl Into<String>,
        tensor: Tensor,
        trainable: bool,
        decay: bool,
    ) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            tensor,
            trainable,
            decay,
        });
        id
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    pub fn param(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn size(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Ids of parameters subject to weight decay.
    pub fn decayed(&self) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.decay && p.trainable)
            .map(|(id, _)| id)
            .collect()
    }
}
