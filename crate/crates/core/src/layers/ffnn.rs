use rand::Rng;

use super::params::{init_bias, init_params, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::numcore::{Graph, NodeId};

pub const NONTEXTUAL_FEATURES: usize = 4;
pub const DEFAULT_NONTEXTUAL_HIDDEN: usize = 300;

/// Hidden layer of the feed-forward branch over the four non-textual features.
#[derive(Debug, Clone)]
pub struct FfnnParams {
    /// `[hidden × 4]`
    pub w1: ParamId,
    pub b1: ParamId,
    pub hidden_size: usize,
}

impl FfnnParams {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, hidden_size: usize, rng: &mut R) -> Self {
        FfnnParams {
            w1: store.add(
                format!("{prefix}.w1"),
                init_params(&[hidden_size, NONTEXTUAL_FEATURES], NONTEXTUAL_FEATURES, hidden_size, rng),
            ),
            b1: store.add(format!("{prefix}.b1"), init_bias(hidden_size)),
            hidden_size,
        }
    }
}

/// `relu(W1·features + b1)`; this hidden vector is what downstream layers see.
pub fn ffnn_nontextual(g: &mut Graph, bound: &Bound, p: &FfnnParams, features: NodeId) -> Result<NodeId> {
    if g.shape(features) != [NONTEXTUAL_FEATURES] {
        return Err(Error::dim("ffnn_nontextual", g.shape(features), &[NONTEXTUAL_FEATURES]));
    }
    let pre = g.matvec(bound.node(p.w1), features)?;
    let pre = g.add(pre, bound.node(p.b1))?;
    g.relu(pre)
}
