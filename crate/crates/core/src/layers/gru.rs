//! The gated recurrent unit.
//!
//! ```text
//! z_t = σ(W_z x_t + U_z h_{t−1})
//! r_t = σ(W_r x_t + U_r h_{t−1})
//! h̃_t = tanh(W x_t + U (r_t ⊙ h_{t−1}))
//! h_t = (1 − z_t) ⊙ h_{t−1} + z_t ⊙ h̃_t
//! ```
//!
//! `z` interpolates between the previous state and the candidate, `r` filters
//! the history fed to the candidate. Biases are optional and off by default.

use rand::Rng;

use super::params::{init_bias, init_params, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::numcore::{Graph, NodeId, Tensor};

#[derive(Debug, Clone)]
pub struct GruBiases {
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub struct GruParams {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u: ParamId,
    pub biases: Option<GruBiases>,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl GruParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Self {
        let (d, h) = (input_size, hidden_size);
        let mut input_matrix = |name: &str, rng: &mut R| store.add(format!("{prefix}.{name}"), init_params(&[h, d], d, h, rng));
        let w_z = input_matrix("w_z", rng);
        let w_r = input_matrix("w_r", rng);
        let w = input_matrix("w", rng);
        let mut hidden_matrix = |name: &str, rng: &mut R| store.add(format!("{prefix}.{name}"), init_params(&[h, h], h, h, rng));
        let u_z = hidden_matrix("u_z", rng);
        let u_r = hidden_matrix("u_r", rng);
        let u = hidden_matrix("u", rng);
        let biases = with_bias.then(|| GruBiases {
            b_z: store.add(format!("{prefix}.b_z"), init_bias(h)),
            b_r: store.add(format!("{prefix}.b_r"), init_bias(h)),
            b: store.add(format!("{prefix}.b"), init_bias(h)),
        });
        GruParams {
            w_z,
            w_r,
            w,
            u_z,
            u_r,
            u,
            biases,
            input_size,
            hidden_size,
        }
    }

    /// The zero initial state.
    pub fn initial_state(&self, g: &mut Graph) -> NodeId {
        g.constant(Tensor::zeros(&[self.hidden_size]))
    }
}

fn gate(g: &mut Graph, w: NodeId, x: NodeId, u: NodeId, h: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
    let wx = g.matvec(w, x)?;
    let uh = g.matvec(u, h)?;
    let pre = g.add(wx, uh)?;
    match bias {
        Some(b) => g.add(pre, b),
        None => Ok(pre),
    }
}

/// One recurrence step, `x_t[D_in]`, `h_prev[H]` → `h_t[H]`.
pub fn gru_step(g: &mut Graph, bound: &Bound, p: &GruParams, x: NodeId, h_prev: NodeId) -> Result<NodeId> {
    if g.shape(x) != [p.input_size] {
        return Err(Error::dim("gru_step input", g.shape(x), &[p.input_size]));
    }
    if g.shape(h_prev) != [p.hidden_size] {
        return Err(Error::dim("gru_step state", g.shape(h_prev), &[p.hidden_size]));
    }
    let n = |id| bound.node(id);
    let biases = p.biases.as_ref();
    let pre_z = gate(g, n(p.w_z), x, n(p.u_z), h_prev, biases.map(|b| n(b.b_z)))?;
    let z = g.sigmoid(pre_z)?;
    let pre_r = gate(g, n(p.w_r), x, n(p.u_r), h_prev, biases.map(|b| n(b.b_r)))?;
    let r = g.sigmoid(pre_r)?;
    let filtered = g.mul(r, h_prev)?;
    let pre_c = gate(g, n(p.w), x, n(p.u), filtered, biases.map(|b| n(b.b)))?;
    let candidate = g.tanh(pre_c)?;
    let keep = g.one_minus(z)?;
    let kept = g.mul(keep, h_prev)?;
    let fresh = g.mul(z, candidate)?;
    g.add(kept, fresh)
}

/// Runs the cell over `inputs` from the zero state; returns every `h_t`.
pub fn gru_sequence(g: &mut Graph, bound: &Bound, p: &GruParams, inputs: &[NodeId]) -> Result<Vec<NodeId>> {
    let mut h = p.initial_state(g);
    let mut outputs = Vec::with_capacity(inputs.len());
    for &x in inputs {
        h = gru_step(g, bound, p, x, h)?;
        outputs.push(h);
    }
    Ok(outputs)
}
