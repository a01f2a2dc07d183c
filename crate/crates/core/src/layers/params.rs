use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Graph, NodeId, Tensor};

/// Bound on embedding rows that are not loaded from a file.
pub const EMBEDDING_INIT_BOUND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, in registration order.
///
/// Values are shared with graphs while a forward pass is alive;
/// [`ParamStore::get_mut`] copies on write only if a graph still holds one.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    /// Replaces a value, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let current = self.get(id);
        if current.shape() != value.shape() {
            return Err(Error::dim("set parameter", current.shape(), value.shape()));
        }
        self.values[id.0] = Arc::new(value);
        Ok(())
    }

    /// Registers every parameter as a trainable leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            nodes: self.values.iter().map(|v| g.param(Arc::clone(v))).collect(),
        }
    }
}

/// Graph nodes standing for the parameters of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    nodes: Vec<NodeId>,
}

impl Bound {
    /// Uses explicit nodes, one per parameter in store order.
    pub fn from_nodes(nodes: Vec<NodeId>) -> Self {
        Bound { nodes }
    }

    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }
}

/// Glorot-uniform samples on `[−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))]`.
pub fn init_params<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, bound, rng)
}

pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let dist = Uniform::new_inclusive(-bound, bound);
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape is valid")
}

pub fn init_bias(len: usize) -> Tensor {
    Tensor::zeros(&[len])
}
