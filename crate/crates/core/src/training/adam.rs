use crate::error::{Error, Result};
use crate::layers::ParamStore;
use crate::numcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params.ids().map(|id| Tensor::zeros(params.get(id).shape())).collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.v[i]
    }
}

/// One bias-corrected Adam update. `grads` is in parameter-store order.
pub fn adam_step(params: &mut ParamStore, grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "adam_step: {} gradients, {} moments for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    let ids: Vec<_> = params.ids().collect();
    for (i, &id) in ids.iter().enumerate() {
        let (p, g) = (params.get(id), &grads[i]);
        if p.shape() != g.shape() {
            return Err(Error::dim("adam_step", p.shape(), g.shape()));
        }
        if state.m[i].shape() != p.shape() {
            return Err(Error::dim("adam_step moments", p.shape(), state.m[i].shape()));
        }
    }

    state.t += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = state.config;
    let c1 = 1.0 - b1.powi(state.t.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - b2.powi(state.t.min(i32::MAX as u64) as i32);
    for (i, &id) in ids.iter().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let theta = params.get_mut(id).data_mut();
        for j in 0..g.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            theta[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before scaling.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let c = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale_in_place(c));
    }
    norm
}
