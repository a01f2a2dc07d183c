//! Finite-difference checks over every differentiable operation, every layer,
//! and a small instance of the full multi-level model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ConversationInput, SentenceInput};
use crate::error::Result;
use crate::layers::{
    embed, encode_sentence_cnn, encode_sentence_grnn, ffnn_nontextual, gru_step, Bound, CnnEncoderParams, Embedding,
    EmbeddingTable, FfnnParams, GruParams, ParamStore,
};
use crate::models::{Model, ModelConfig, Preset};
use crate::numcore::gradcheck::{check_gradients, GradCheckOptions, DEFAULT_TOLERANCE};
use crate::numcore::{Graph, NodeId, OpKind, Tensor};

pub const LAYER_CASES: [&str; 5] = ["embed", "gru_step", "encode_sentence_grnn", "encode_sentence_cnn", "ffnn_nontextual"];
pub const MODEL_CASE: &str = "model:multi-level-grnn-non-textual";

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub max_relative_error: f64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error < DEFAULT_TOLERANCE
    }
}

/// Every case name, in report order.
pub fn case_names() -> Vec<String> {
    OpKind::ALL
        .iter()
        .map(|k| k.name().to_string())
        .chain(LAYER_CASES.iter().map(|s| s.to_string()))
        .chain(std::iter::once(MODEL_CASE.to_string()))
        .collect()
}

/// Runs every case with inputs drawn from `seed`. `corrupt` names one case whose
/// backward pass gets a deliberately wrong gradient.
pub fn run_suite(seed: u64, corrupt: Option<&str>) -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for (i, kind) in OpKind::ALL.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(i as u64));
        let fault = (corrupt == Some(kind.name())).then_some(*kind);
        out.push(CaseResult {
            name: kind.name().to_string(),
            max_relative_error: check_op(*kind, fault, &mut rng)?,
        });
    }
    for (i, name) in LAYER_CASES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(100 + i as u64));
        out.push(CaseResult {
            name: name.to_string(),
            max_relative_error: check_layer(name, corrupt == Some(*name), &mut rng)?,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(200));
    out.push(CaseResult {
        name: MODEL_CASE.to_string(),
        max_relative_error: check_model(corrupt == Some(MODEL_CASE), &mut rng)?,
    });
    Ok(out)
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("valid shape")
}

/// Contracts `out` against a fixed random probe so every output entry matters.
fn probe(g: &mut Graph, out: NodeId, weights: &Tensor) -> Result<NodeId> {
    let w = g.constant(weights.clone());
    let p = g.mul(out, w)?;
    g.sum(p)
}

fn options(fault: Option<OpKind>) -> GradCheckOptions {
    GradCheckOptions {
        fault,
        ..Default::default()
    }
}

fn check_op(kind: OpKind, fault: Option<OpKind>, rng: &mut ChaCha8Rng) -> Result<f64> {
    let opts = options(fault);
    let r = |s: &[usize], rng: &mut ChaCha8Rng| rand_tensor(s, rng);
    let res = match kind {
        OpKind::Leaf => unreachable!("leaves are not in OpKind::ALL"),
        OpKind::MatMul => {
            let w = r(&[3, 2], rng);
            check_gradients(&[r(&[3, 4], rng), r(&[4, 2], rng)], opts, |g, x| {
                let y = g.matmul(x[0], x[1])?;
                probe(g, y, &w)
            })?
        }
        OpKind::MatVec => {
            let w = r(&[3], rng);
            check_gradients(&[r(&[3, 4], rng), r(&[4], rng)], opts, |g, x| {
                let y = g.matvec(x[0], x[1])?;
                probe(g, y, &w)
            })?
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let w = r(&[2, 3], rng);
            check_gradients(&[r(&[2, 3], rng), r(&[2, 3], rng)], opts, |g, x| {
                let y = match kind {
                    OpKind::Add => g.add(x[0], x[1])?,
                    OpKind::Sub => g.sub(x[0], x[1])?,
                    _ => g.mul(x[0], x[1])?,
                };
                probe(g, y, &w)
            })?
        }
        OpKind::AddRowwise => {
            let w = r(&[3, 2], rng);
            check_gradients(&[r(&[3, 2], rng), r(&[2], rng)], opts, |g, x| {
                let y = g.add_rowwise(x[0], x[1])?;
                probe(g, y, &w)
            })?
        }
        OpKind::Scale | OpKind::OneMinus | OpKind::Sigmoid | OpKind::Tanh | OpKind::Relu => {
            let w = r(&[5], rng);
            let mut x0 = r(&[5], rng);
            if kind == OpKind::Relu {
                // keep inputs clear of the kink
                x0 = x0.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
            }
            check_gradients(&[x0], opts, |g, x| {
                let y = match kind {
                    OpKind::Scale => g.scale(x[0], -1.7)?,
                    OpKind::OneMinus => g.one_minus(x[0])?,
                    OpKind::Sigmoid => g.sigmoid(x[0])?,
                    OpKind::Tanh => g.tanh(x[0])?,
                    _ => g.relu(x[0])?,
                };
                probe(g, y, &w)
            })?
        }
        OpKind::MaxPoolTime => {
            let w = r(&[3], rng);
            check_gradients(&[r(&[4, 3], rng)], opts, |g, x| {
                let y = g.max_pool_time(x[0])?;
                probe(g, y, &w)
            })?
        }
        OpKind::Softmax => {
            let w = r(&[4], rng);
            check_gradients(&[r(&[4], rng)], opts, |g, x| {
                let y = g.softmax(x[0])?;
                probe(g, y, &w)
            })?
        }
        OpKind::SoftmaxNll => {
            let target = rng.gen_range(0..5);
            check_gradients(&[r(&[5], rng)], opts, |g, x| g.softmax_nll(x[0], target))?
        }
        OpKind::SumAll => check_gradients(&[r(&[2, 3], rng)], opts, |g, x| {
            let sq = g.mul(x[0], x[0])?;
            g.sum(sq)
        })?,
        OpKind::Mean => check_gradients(&[r(&[3], rng), r(&[3], rng)], opts, |g, x| {
            let a = g.mul(x[0], x[0])?;
            let a = g.sum(a)?;
            let b = g.sum(x[1])?;
            let b = g.tanh(b)?;
            g.mean(&[a, b])
        })?,
        OpKind::Concat => {
            let w = r(&[5], rng);
            check_gradients(&[r(&[2], rng), r(&[3], rng)], opts, |g, x| {
                let y = g.concat(&[x[0], x[1]])?;
                probe(g, y, &w)
            })?
        }
        OpKind::StackRows => {
            let w = r(&[3, 2], rng);
            check_gradients(&[r(&[2], rng), r(&[2], rng), r(&[2], rng)], opts, |g, x| {
                let y = g.stack_rows(x)?;
                probe(g, y, &w)
            })?
        }
        OpKind::Gather => {
            let w = r(&[4, 3], rng);
            check_gradients(&[r(&[5, 3], rng)], opts, |g, x| {
                let y = g.gather(x[0], &[3, 0, 3, 4])?;
                probe(g, y, &w)
            })?
        }
        OpKind::PadRows => {
            let w = r(&[5, 2], rng);
            check_gradients(&[r(&[2, 2], rng)], opts, |g, x| {
                let y = g.pad_rows(x[0], 5)?;
                probe(g, y, &w)
            })?
        }
        OpKind::SelectRow => {
            let w = r(&[3], rng);
            check_gradients(&[r(&[4, 3], rng)], opts, |g, x| {
                let y = g.select_row(x[0], 2)?;
                probe(g, y, &w)
            })?
        }
        OpKind::Conv1d => {
            let w = r(&[4, 3], rng);
            check_gradients(&[r(&[6, 2], rng), r(&[3, 3, 2], rng)], opts, |g, x| {
                let y = g.conv1d(x[0], x[1])?;
                probe(g, y, &w)
            })?
        }
    };
    Ok(res.max_relative_error())
}

/// Checks gradients with respect to every parameter in `store` plus `extra` inputs.
fn check_store<F>(store: &ParamStore, extra: &[Tensor], corrupt: Option<OpKind>, build: F) -> Result<f64>
where
    F: Fn(&mut Graph, &Bound, &[NodeId]) -> Result<NodeId>,
{
    let n = store.len();
    let mut inputs: Vec<Tensor> = store.ids().map(|id| store.get(id).clone()).collect();
    inputs.extend_from_slice(extra);
    let res = check_gradients(&inputs, options(corrupt), |g, ids| {
        let bound = Bound::from_nodes(ids[..n].to_vec());
        build(g, &bound, &ids[n..])
    })?;
    Ok(res.max_relative_error())
}

fn check_layer(name: &str, corrupt: bool, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut store = ParamStore::new();
    match name {
        "embed" => {
            let emb = Embedding::register(&mut store, "e", EmbeddingTable::new(rand_tensor(&[6, 3], rng))?);
            let w = rand_tensor(&[4, 3], rng);
            check_store(&store, &[], corrupt.then_some(OpKind::Gather), |g, b, _| {
                let y = embed(g, b, &emb, &[3, 3, 1, 5])?;
                probe(g, y, &w)
            })
        }
        "gru_step" => {
            let p = GruParams::new(&mut store, "gru", 3, 4, true, rng);
            for id in store.ids().collect::<Vec<_>>() {
                let shape = store.get(id).shape().to_vec();
                store.set(id, rand_tensor(&shape, rng))?;
            }
            let w = rand_tensor(&[4], rng);
            let extra = [rand_tensor(&[3], rng), rand_tensor(&[4], rng)];
            check_store(&store, &extra, corrupt.then_some(OpKind::Sigmoid), |g, b, x| {
                let h = gru_step(g, b, &p, x[0], x[1])?;
                probe(g, h, &w)
            })
        }
        "encode_sentence_grnn" => {
            let emb = Embedding::register(&mut store, "e", EmbeddingTable::new(rand_tensor(&[5, 3], rng))?);
            let p = GruParams::new(&mut store, "gru", 3, 4, false, rng);
            let w = rand_tensor(&[4], rng);
            check_store(&store, &[], corrupt.then_some(OpKind::MaxPoolTime), |g, b, _| {
                let v = encode_sentence_grnn(g, b, &emb, &p, &[1, 4, 2, 1])?;
                probe(g, v, &w)
            })
        }
        "encode_sentence_cnn" => {
            let emb = Embedding::register(&mut store, "e", EmbeddingTable::new(rand_tensor(&[5, 3], rng))?);
            let p = CnnEncoderParams::new(&mut store, "cnn", 3, &[2, 3], 2, rng)?;
            for id in store.ids().collect::<Vec<_>>() {
                let shape = store.get(id).shape().to_vec();
                store.set(id, rand_tensor(&shape, rng))?;
            }
            let w = rand_tensor(&[4], rng);
            check_store(&store, &[], corrupt.then_some(OpKind::Conv1d), |g, b, _| {
                let v = encode_sentence_cnn(g, b, &emb, &p, &[0, 3, 2, 4, 1])?;
                probe(g, v, &w)
            })
        }
        "ffnn_nontextual" => {
            let p = FfnnParams::new(&mut store, "ff", 5, rng);
            for id in store.ids().collect::<Vec<_>>() {
                let shape = store.get(id).shape().to_vec();
                store.set(id, rand_tensor(&shape, rng))?;
            }
            let w = rand_tensor(&[5], rng);
            let f = rand_tensor(&[4], rng);
            check_store(&store, &[f], corrupt.then_some(OpKind::Relu), |g, b, x| {
                let h = ffnn_nontextual(g, b, &p, x[0])?;
                probe(g, h, &w)
            })
        }
        other => unreachable!("unknown layer case {other}"),
    }
}

/// The full model on a two-sentence toy conversation.
pub fn toy_model_and_conversation(seed: u64) -> Result<(Model, ConversationInput)> {
    let mut cfg = ModelConfig::preset(Preset::MultiLevelGrnnNonTextual, 7, 4);
    cfg.embedding_dim = 3;
    cfg.sentence_hidden = 3;
    cfg.nontextual_hidden = 3;
    cfg.context_hidden = 3;
    cfg.seed = seed;
    let mut model = Model::build(cfg, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let shape = model.params().get(id).shape().to_vec();
        model.params_mut().set(id, rand_tensor(&shape, &mut rng))?;
    }
    let conv = ConversationInput {
        id: "toy".into(),
        sentences: vec![
            SentenceInput {
                tokens: vec![1, 3, 2],
                features: [1.0, 1.0, 1.0, rng.gen_range(-1.0..1.0)],
            },
            SentenceInput {
                tokens: vec![4, 0],
                features: [2.0, 1.0, 0.0, rng.gen_range(-1.0..1.0)],
            },
        ],
        gold: Some(vec![rng.gen_range(0..4), rng.gen_range(0..4)]),
    };
    Ok((model, conv))
}

fn check_model(corrupt: bool, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (model, conv) = toy_model_and_conversation(rng.gen())?;
    check_store(model.params(), &[], corrupt.then_some(OpKind::Tanh), |g, b, _| {
        Ok(model.loss_node(g, b, &conv)?.0)
    })
}

/// Plain-text report, one line per case.
pub fn format_report(results: &[CaseResult]) -> String {
    let mut out = format!("{:<36} {:>14}  result\n", "case", "max_rel_error");
    for r in results {
        out.push_str(&format!(
            "{:<36} {:>14.3e}  {}\n",
            r.name,
            r.max_relative_error,
            if r.passed() { "pass" } else { "FAIL" }
        ));
    }
    out
}
