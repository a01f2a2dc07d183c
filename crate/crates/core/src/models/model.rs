use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ContextKind, ModelConfig, SentenceEncoderKind};
use crate::corpus::{ConversationInput, SentenceInput};
use crate::error::{Error, Result};
use crate::layers::{
    encode_sentence_cnn, encode_sentence_grnn, ffnn_nontextual, gru_step, init_bias, init_params, Bound,
    CnnEncoderParams, Embedding, EmbeddingTable, FfnnParams, GruParams, ParamId, ParamStore,
};
use crate::numcore::{Graph, NodeId, Tensor};

#[derive(Debug, Clone)]
pub enum SentenceEncoder {
    None,
    Grnn(GruParams),
    Cnn(CnnEncoderParams),
}

/// Graph nodes making up one sentence's representation.
#[derive(Debug, Clone, Copy)]
pub struct SentenceVector {
    pub textual: Option<NodeId>,
    pub nontextual: Option<NodeId>,
    pub combined: NodeId,
}

/// One assembled architecture with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    embedding: Option<Embedding>,
    encoder: SentenceEncoder,
    ffnn: Option<FfnnParams>,
    context: Option<GruParams>,
    out_w: ParamId,
    out_b: ParamId,
}

/// Per-sentence mean negative log-likelihood and parameter gradients.
#[derive(Debug, Clone)]
pub struct LossAndGradients {
    pub loss: f64,
    pub per_sentence: Vec<f64>,
    /// In parameter-store order.
    pub gradients: Vec<Tensor>,
}

impl Model {
    /// Allocates and seeds every parameter. `embeddings` replaces the random
    /// table when given and must be `vocab_size × embedding_dim`.
    pub fn build(config: ModelConfig, embeddings: Option<EmbeddingTable>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();

        let embedding = if config.uses_embeddings() {
            let table = match embeddings {
                Some(t) => {
                    if t.vocab_size() != config.vocab_size || t.dim() != config.embedding_dim {
                        return Err(Error::Config(format!(
                            "embedding table is {}×{}, model expects {}×{}",
                            t.vocab_size(),
                            t.dim(),
                            config.vocab_size,
                            config.embedding_dim
                        )));
                    }
                    t
                }
                None => {
                    let mut m = EmbeddingTable::random(config.vocab_size, config.embedding_dim, &mut rng).into_matrix();
                    // EMPTY is the last id.
                    m.row_mut(config.vocab_size - 1).fill(0.0);
                    EmbeddingTable::new(m)?
                }
            };
            Some(Embedding::register(&mut params, "embedding", table))
        } else {
            None
        };

        let encoder = match config.sentence_encoder {
            SentenceEncoderKind::None => SentenceEncoder::None,
            SentenceEncoderKind::Grnn => SentenceEncoder::Grnn(GruParams::new(
                &mut params,
                "sentence_gru",
                config.embedding_dim,
                config.sentence_hidden,
                config.gru_bias,
                &mut rng,
            )),
            SentenceEncoderKind::Cnn => SentenceEncoder::Cnn(CnnEncoderParams::new(
                &mut params,
                "cnn",
                config.embedding_dim,
                &config.cnn_widths,
                config.cnn_maps,
                &mut rng,
            )?),
        };

        let ffnn = config
            .use_nontextual
            .then(|| FfnnParams::new(&mut params, "nontextual", config.nontextual_hidden, &mut rng));

        let context = match config.context {
            ContextKind::None => None,
            ContextKind::Grnn => Some(GruParams::new(
                &mut params,
                "context_gru",
                config.combined_width(),
                config.context_hidden,
                config.gru_bias,
                &mut rng,
            )),
        };

        let (k, width) = (config.num_classes, config.readout_width());
        let out_w = params.add("output.w", init_params(&[k, width], width, k, &mut rng));
        let out_b = params.add("output.b", init_bias(k));

        Ok(Model {
            config,
            params,
            embedding,
            encoder,
            ffnn,
            context,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn embedding(&self) -> Option<&Embedding> {
        self.embedding.as_ref()
    }

    pub fn encoder(&self) -> &SentenceEncoder {
        &self.encoder
    }

    pub fn output_layer(&self) -> (ParamId, ParamId) {
        (self.out_w, self.out_b)
    }

    /// Builds the sentence representation: textual vector, non-textual hidden
    /// layer, and their concatenation.
    pub fn sentence_vector(&self, g: &mut Graph, bound: &Bound, s: &SentenceInput) -> Result<SentenceVector> {
        let textual = match (&self.encoder, &self.embedding) {
            (SentenceEncoder::None, _) => None,
            (SentenceEncoder::Grnn(p), Some(e)) => Some(encode_sentence_grnn(g, bound, e, p, &s.tokens)?),
            (SentenceEncoder::Cnn(p), Some(e)) => Some(encode_sentence_cnn(g, bound, e, p, &s.tokens)?),
            _ => unreachable!("text encoders are always built with an embedding"),
        };
        let nontextual = match &self.ffnn {
            Some(p) => {
                let f = g.constant(Tensor::vector(s.features.to_vec())?);
                Some(ffnn_nontextual(g, bound, p, f)?)
            }
            None => None,
        };
        let combined = match (textual, nontextual) {
            (Some(t), Some(n)) => g.concat(&[t, n])?,
            (Some(v), None) | (None, Some(v)) => v,
            (None, None) => unreachable!("validated config has an input"),
        };
        Ok(SentenceVector {
            textual,
            nontextual,
            combined,
        })
    }

    fn readout(&self, g: &mut Graph, bound: &Bound, v: NodeId) -> Result<NodeId> {
        let z = g.matvec(bound.node(self.out_w), v)?;
        g.add(z, bound.node(self.out_b))
    }

    /// One logit vector per sentence, in order. With a context GRU, step `t`
    /// sees sentences `1..=t` only.
    pub fn logits(&self, g: &mut Graph, bound: &Bound, conv: &ConversationInput) -> Result<Vec<NodeId>> {
        if conv.sentences.is_empty() {
            return Err(Error::EmptySequence("forward_conversation"));
        }
        let mut out = Vec::with_capacity(conv.len());
        let mut state = self.context.as_ref().map(|p| p.initial_state(g));
        for s in &conv.sentences {
            let v = self.sentence_vector(g, bound, s)?.combined;
            let top = match (&self.context, state) {
                (Some(p), Some(h)) => {
                    let h = gru_step(g, bound, p, v, h)?;
                    state = Some(h);
                    h
                }
                _ => v,
            };
            out.push(self.readout(g, bound, top)?);
        }
        Ok(out)
    }

    /// Mean negative log-likelihood of the gold tags.
    pub fn loss_node(&self, g: &mut Graph, bound: &Bound, conv: &ConversationInput) -> Result<(NodeId, Vec<NodeId>)> {
        let gold = conv
            .gold
            .as_ref()
            .ok_or_else(|| Error::Data(format!("conversation {} has no gold tags", conv.id)))?;
        if gold.len() != conv.len() {
            return Err(Error::Data(format!(
                "conversation {}: {} gold tags for {} sentences",
                conv.id,
                gold.len(),
                conv.len()
            )));
        }
        let logits = self.logits(g, bound, conv)?;
        let per_sentence = logits
            .iter()
            .zip(gold)
            .map(|(&l, &t)| g.softmax_nll(l, t))
            .collect::<Result<Vec<_>>>()?;
        Ok((g.mean(&per_sentence)?, per_sentence))
    }

    /// Per-sentence class distributions.
    pub fn forward_conversation(&self, conv: &ConversationInput) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let logits = self.logits(&mut g, &bound, conv)?;
        logits
            .into_iter()
            .map(|l| {
                let p = g.softmax(l)?;
                Ok(g.value(p).clone())
            })
            .collect()
    }

    /// Argmax tag per sentence, first index on ties.
    pub fn predict_tags(&self, conv: &ConversationInput) -> Result<Vec<usize>> {
        Ok(self
            .forward_conversation(conv)?
            .iter()
            .map(argmax_tag)
            .collect())
    }

    pub fn conversation_loss(&self, conv: &ConversationInput) -> Result<f64> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let (loss, _) = self.loss_node(&mut g, &bound, conv)?;
        g.value(loss).item()
    }

    pub fn loss_and_gradients(&self, conv: &ConversationInput) -> Result<LossAndGradients> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let (loss, per) = self.loss_node(&mut g, &bound, conv)?;
        let mut grads = g.backward(loss)?;
        let gradients = bound
            .nodes()
            .iter()
            .map(|&n| grads.take(n).expect("parameters always receive a gradient"))
            .collect();
        Ok(LossAndGradients {
            loss: g.value(loss).item()?,
            per_sentence: per.iter().map(|&n| g.value(n).data()[0]).collect(),
            gradients,
        })
    }
}

/// Index of the largest probability, first index on ties.
pub fn argmax_tag(dist: &Tensor) -> usize {
    dist.argmax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Preset;

    fn tiny(preset: Preset) -> ModelConfig {
        let mut c = ModelConfig::preset(preset, 8, 4);
        c.embedding_dim = 3;
        c.sentence_hidden = 4;
        c.nontextual_hidden = 3;
        c.context_hidden = 5;
        c.cnn_widths = vec![2, 3];
        c.cnn_maps = 2;
        c.seed = 11;
        c
    }

    fn conv(n: usize) -> ConversationInput {
        ConversationInput {
            id: "c".into(),
            sentences: (0..n)
                .map(|i| SentenceInput {
                    tokens: vec![i % 6, (i + 2) % 6],
                    features: [i as f64 + 1.0, 1.0, 1.0, 0.3 * i as f64],
                })
                .collect(),
            gold: Some((0..n).map(|i| i % 4).collect()),
        }
    }

    #[test]
    fn full_model_composition() {
        let m = Model::build(ModelConfig::preset(Preset::MultiLevelGrnnNonTextual, 20, 43), None).unwrap();
        let p = m.params();
        let shape = |n: &str| p.get(p.find(n).unwrap()).shape().to_vec();
        assert_eq!(shape("embedding"), [20, 300]);
        assert_eq!(shape("sentence_gru.w_z"), [300, 300]);
        assert_eq!(shape("nontextual.w1"), [300, 4]);
        assert_eq!(shape("context_gru.w_z"), [300, 600]);
        assert_eq!(shape("context_gru.u"), [300, 300]);
        assert_eq!(shape("output.w"), [43, 300]);
    }

    #[test]
    fn nontextual_preset_has_no_embeddings() {
        let m = Model::build(ModelConfig::preset(Preset::NonTextual, 0, 43), None).unwrap();
        assert!(m.embedding().is_none());
        let names: Vec<&str> = m.params().ids().map(|i| m.params().name(i)).collect();
        assert_eq!(names, ["nontextual.w1", "nontextual.b1", "output.w", "output.b"]);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Model::build(tiny(Preset::CnnNonTextualGrnn), None).unwrap();
        let b = Model::build(tiny(Preset::CnnNonTextualGrnn), None).unwrap();
        for id in a.params().ids() {
            assert_eq!(a.params().get(id), b.params().get(id));
        }
    }

    #[test]
    fn every_preset_emits_distributions() {
        for p in Preset::ALL {
            let m = Model::build(tiny(p), None).unwrap();
            let out = m.forward_conversation(&conv(3)).unwrap();
            assert_eq!(out.len(), 3);
            for d in out {
                assert_eq!(d.shape(), &[4]);
                assert!(d.data().iter().all(|&x| x >= 0.0));
                assert!((d.sum() - 1.0).abs() < 1e-12, "{p}");
            }
        }
    }

    #[test]
    fn empty_conversation_fails() {
        let m = Model::build(tiny(Preset::MultiLevelGrnn), None).unwrap();
        let mut c = conv(1);
        c.sentences.clear();
        assert!(matches!(m.forward_conversation(&c), Err(Error::EmptySequence(_))));
    }

    #[test]
    fn missing_gold_is_a_data_error() {
        let m = Model::build(tiny(Preset::MultiLevelGrnn), None).unwrap();
        let mut c = conv(2);
        c.gold = None;
        assert!(matches!(m.conversation_loss(&c), Err(Error::Data(_))));
    }

    #[test]
    fn loss_is_mean_of_sentence_losses() {
        let m = Model::build(tiny(Preset::CnnGrnn), None).unwrap();
        let r = m.loss_and_gradients(&conv(2)).unwrap();
        assert_eq!(r.per_sentence.len(), 2);
        assert!((r.loss - (r.per_sentence[0] + r.per_sentence[1]) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn wrong_embedding_size_is_config_error() {
        let table = EmbeddingTable::new(Tensor::zeros(&[8, 5])).unwrap();
        assert!(matches!(Model::build(tiny(Preset::Cnn), Some(table)), Err(Error::Config(_))));
    }

    #[test]
    fn argmax_ties_pick_first() {
        let mut d = vec![0.0; 8];
        d[2] = 0.4;
        d[5] = 0.4;
        assert_eq!(argmax_tag(&Tensor::vector(d).unwrap()), 2);
        let mut d = vec![0.01; 10];
        d[7] = 0.91;
        assert_eq!(argmax_tag(&Tensor::vector(d).unwrap()), 7);
    }
}
