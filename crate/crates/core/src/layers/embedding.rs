use rand::Rng;

use super::params::{uniform, Bound, ParamId, ParamStore, EMBEDDING_INIT_BOUND};
use crate::error::{Error, Result};
use crate::numcore::{Graph, NodeId, Tensor};

pub const DEFAULT_EMBEDDING_DIM: usize = 300;

/// A `V×D` matrix of word vectors, one row per vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    matrix: Tensor,
}

impl EmbeddingTable {
    pub fn new(matrix: Tensor) -> Result<Self> {
        if matrix.rank() != 2 {
            return Err(Error::dim("embedding table", matrix.shape(), &[]));
        }
        Ok(EmbeddingTable { matrix })
    }

    pub fn random<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        EmbeddingTable {
            matrix: uniform(&[vocab_size, dim], EMBEDDING_INIT_BOUND, rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.matrix.row(id)
    }

    pub fn into_matrix(self) -> Tensor {
        self.matrix
    }
}

/// Handle to an embedding table registered in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn register(store: &mut ParamStore, name: &str, table: EmbeddingTable) -> Self {
        let (vocab_size, dim) = (table.vocab_size(), table.dim());
        Embedding {
            table: store.add(name, table.into_matrix()),
            vocab_size,
            dim,
        }
    }
}

/// Looks up `tokens`, giving an `L×D` matrix. Gradients flow back into the
/// touched rows only.
pub fn embed(g: &mut Graph, bound: &Bound, emb: &Embedding, tokens: &[usize]) -> Result<NodeId> {
    g.gather(bound.node(emb.table), tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with_table() -> (ParamStore, Embedding) {
        let mut store = ParamStore::new();
        let t = Tensor::matrix(4, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        let emb = Embedding::register(&mut store, "emb", EmbeddingTable::new(t).unwrap());
        (store, emb)
    }

    #[test]
    fn single_id_returns_its_row() {
        let (store, emb) = store_with_table();
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let x = embed(&mut g, &b, &emb, &[0]).unwrap();
        assert_eq!(g.value(x).data(), &[0.0, 1.0]);
    }

    #[test]
    fn empty_and_out_of_range_ids_fail() {
        let (store, emb) = store_with_table();
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        assert!(matches!(embed(&mut g, &b, &emb, &[]), Err(Error::EmptySequence(_))));
        assert!(matches!(embed(&mut g, &b, &emb, &[9]), Err(Error::Index { .. })));
    }
}
