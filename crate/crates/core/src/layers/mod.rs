//! Neural building blocks: embeddings, the GRU cell, sentence encoders and the
//! non-textual feed-forward branch.
//!
//! Layers own [`ParamId`] handles into a shared [`ParamStore`]; a forward pass
//! binds the store into a graph and threads the resulting [`Bound`] through.

mod cnn;
mod embedding;
mod ffnn;
mod gru;
mod params;

pub use cnn::{cnn_encode, padded_len, CnnEncoderParams, ConvFilter, DEFAULT_FEATURE_MAPS, DEFAULT_FILTER_WIDTHS};
pub use embedding::{embed, Embedding, EmbeddingTable, DEFAULT_EMBEDDING_DIM};
pub use ffnn::{ffnn_nontextual, FfnnParams, DEFAULT_NONTEXTUAL_HIDDEN, NONTEXTUAL_FEATURES};
pub use gru::{gru_sequence, gru_step, GruBiases, GruParams};
pub use params::{init_bias, init_params, uniform, Bound, ParamId, ParamStore, EMBEDDING_INIT_BOUND};

use crate::error::{Error, Result};
use crate::numcore::{Graph, NodeId};

/// Low-level GRNN sentence vector: embed, run the GRU word by word from a zero
/// state, then max-pool the hidden states over time.
pub fn encode_sentence_grnn(
    g: &mut Graph,
    bound: &Bound,
    emb: &Embedding,
    p: &GruParams,
    tokens: &[usize],
) -> Result<NodeId> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence("encode_sentence_grnn"));
    }
    let words = embed(g, bound, emb, tokens)?;
    let inputs = (0..tokens.len())
        .map(|t| g.select_row(words, t))
        .collect::<Result<Vec<_>>>()?;
    let states = gru_sequence(g, bound, p, &inputs)?;
    let stacked = g.stack_rows(&states)?;
    g.max_pool_time(stacked)
}

/// CNN sentence vector over the embedded tokens.
pub fn encode_sentence_cnn(
    g: &mut Graph,
    bound: &Bound,
    emb: &Embedding,
    p: &CnnEncoderParams,
    tokens: &[usize],
) -> Result<NodeId> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence("encode_sentence_cnn"));
    }
    let x = embed(g, bound, emb, tokens)?;
    cnn_encode(g, bound, p, x)
}
