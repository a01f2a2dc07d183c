use rand::Rng;

use super::params::{init_bias, init_params, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::numcore::{Graph, NodeId};

pub const DEFAULT_FILTER_WIDTHS: [usize; 3] = [2, 3, 4];
pub const DEFAULT_FEATURE_MAPS: usize = 100;

#[derive(Debug, Clone)]
pub struct ConvFilter {
    pub width: usize,
    /// `[maps × width × D]`
    pub weights: ParamId,
    pub bias: ParamId,
}

/// One convolution bank per filter width; output width is `maps × widths`.
#[derive(Debug, Clone)]
pub struct CnnEncoderParams {
    pub filters: Vec<ConvFilter>,
    pub maps: usize,
    pub input_dim: usize,
}

impl CnnEncoderParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        widths: &[usize],
        maps: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) || maps == 0 {
            return Err(Error::Config(format!(
                "cnn needs positive filter widths and maps, got {widths:?} × {maps}"
            )));
        }
        let filters = widths
            .iter()
            .map(|&w| ConvFilter {
                width: w,
                weights: store.add(
                    format!("{prefix}.w{w}"),
                    init_params(&[maps, w, input_dim], w * input_dim, maps, rng),
                ),
                bias: store.add(format!("{prefix}.b{w}"), init_bias(maps)),
            })
            .collect();
        Ok(CnnEncoderParams {
            filters,
            maps,
            input_dim,
        })
    }

    pub fn output_size(&self) -> usize {
        self.maps * self.filters.len()
    }

    pub fn max_width(&self) -> usize {
        self.filters.iter().map(|f| f.width).max().unwrap_or(1)
    }
}

/// Zero rows appended to a sentence of `len` words before convolution.
///
/// With `len + max_width` rows every bank sees each partial window at the
/// sentence end plus at least one all-zero window, so any further zero rows
/// only repeat windows already pooled.
pub fn padded_len(len: usize, max_width: usize) -> usize {
    len + max_width
}

/// Convolution over an embedded sentence `x[L×D]`: right zero-padding, then per
/// width a valid convolution, relu and max over time; the pooled maps are
/// concatenated.
pub fn cnn_encode(g: &mut Graph, bound: &Bound, p: &CnnEncoderParams, x: NodeId) -> Result<NodeId> {
    let shape = g.shape(x);
    if shape.len() != 2 || shape[1] != p.input_dim {
        return Err(Error::dim("cnn input", shape, &[p.input_dim]));
    }
    let padded = g.pad_rows(x, padded_len(shape[0], p.max_width()))?;
    let mut pooled = Vec::with_capacity(p.filters.len());
    for f in &p.filters {
        let conv = g.conv1d(padded, bound.node(f.weights))?;
        let biased = g.add_rowwise(conv, bound.node(f.bias))?;
        let act = g.relu(biased)?;
        pooled.push(g.max_pool_time(act)?);
    }
    g.concat(&pooled)
}
