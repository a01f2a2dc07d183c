//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, NodeId, OpKind};
use super::tensor::{Real, Tensor};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub fault: Option<OpKind>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: DEFAULT_STEP,
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` for each input.
    pub per_input: Vec<f64>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.per_input.iter().copied().fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

/// Compares the gradient of a scalar function of `inputs` against central
/// differences. `build` receives one variable node per input and returns the
/// loss node; it is called once for the analytic pass and twice per input entry.
pub fn check_gradients<T, F>(inputs: &[Tensor<T>], options: GradCheckOptions, build: F) -> Result<GradCheck>
where
    T: Real,
    F: Fn(&mut Graph<T>, &[NodeId]) -> Result<NodeId>,
{
    let evaluate = |values: &[Tensor<T>]| -> Result<T> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|v| g.variable(v.clone())).collect();
        let loss = build(&mut g, &ids)?;
        g.value(loss).item()
    };

    let mut g = Graph::new();
    if let Some(kind) = options.fault {
        g.inject_gradient_fault(kind);
    }
    let ids: Vec<NodeId> = inputs.iter().map(|v| g.variable(v.clone())).collect();
    let loss = build(&mut g, &ids)?;
    let grads = g.backward(loss)?;

    let h = T::lit(options.step);
    let two_h = h + h;
    let mut per_input = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    for (i, &id) in ids.iter().enumerate() {
        let analytic: Vec<f64> = grads
            .get(id)
            .expect("variables always receive a gradient")
            .data()
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..work[i].numel() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = evaluate(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = evaluate(&work)?;
            work[i].data_mut()[j] = orig;
            numeric.push(((plus - minus) / two_h).to_f64().unwrap_or(f64::NAN));
        }
        per_input.push(relative_error(&analytic, &numeric));
    }
    Ok(GradCheck { per_input })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_matching_and_faulty_gradients() {
        let x = Tensor::vector(vec![0.3, -0.7, 1.1]).unwrap();
        let build = |g: &mut Graph, ids: &[NodeId]| {
            let t = g.tanh(ids[0])?;
            let sq = g.mul(t, t)?;
            g.sum(sq)
        };
        let ok = check_gradients(std::slice::from_ref(&x), GradCheckOptions::default(), build).unwrap();
        assert!(ok.max_relative_error() < 1e-8, "{ok:?}");

        let faulty = GradCheckOptions {
            fault: Some(OpKind::Tanh),
            ..Default::default()
        };
        let bad = check_gradients(&[x], faulty, build).unwrap();
        assert!(bad.max_relative_error() > 0.1);
    }

    #[test]
    fn relative_error_of_zero_vectors_is_zero() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    }
}
