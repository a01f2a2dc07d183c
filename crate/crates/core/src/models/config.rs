use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{DEFAULT_EMBEDDING_DIM, DEFAULT_FEATURE_MAPS, DEFAULT_FILTER_WIDTHS, DEFAULT_NONTEXTUAL_HIDDEN};

pub const DEFAULT_HIDDEN: usize = 300;
pub const DEFAULT_NUM_CLASSES: usize = 43;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SentenceEncoderKind {
    None,
    Cnn,
    Grnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextKind {
    None,
    Grnn,
}

/// The ten architectures compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Cnn,
    SingleLevelGrnn,
    NonTextual,
    CnnNonTextual,
    SingleLevelGrnnNonTextual,
    NonTextualGrnn,
    CnnGrnn,
    MultiLevelGrnn,
    CnnNonTextualGrnn,
    MultiLevelGrnnNonTextual,
}

impl Preset {
    pub const ALL: [Preset; 10] = [
        Preset::Cnn,
        Preset::SingleLevelGrnn,
        Preset::NonTextual,
        Preset::CnnNonTextual,
        Preset::SingleLevelGrnnNonTextual,
        Preset::NonTextualGrnn,
        Preset::CnnGrnn,
        Preset::MultiLevelGrnn,
        Preset::CnnNonTextualGrnn,
        Preset::MultiLevelGrnnNonTextual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Cnn => "cnn",
            Preset::SingleLevelGrnn => "single-level-grnn",
            Preset::NonTextual => "non-textual",
            Preset::CnnNonTextual => "cnn-non-textual",
            Preset::SingleLevelGrnnNonTextual => "single-level-grnn-non-textual",
            Preset::NonTextualGrnn => "non-textual-grnn",
            Preset::CnnGrnn => "cnn-grnn",
            Preset::MultiLevelGrnn => "multi-level-grnn",
            Preset::CnnNonTextualGrnn => "cnn-non-textual-grnn",
            Preset::MultiLevelGrnnNonTextual => "multi-level-grnn-non-textual",
        }
    }

    /// `(sentence encoder, non-textual branch, context)`.
    pub fn layout(self) -> (SentenceEncoderKind, bool, ContextKind) {
        use ContextKind as C;
        use SentenceEncoderKind as S;
        match self {
            Preset::Cnn => (S::Cnn, false, C::None),
            Preset::SingleLevelGrnn => (S::Grnn, false, C::None),
            Preset::NonTextual => (S::None, true, C::None),
            Preset::CnnNonTextual => (S::Cnn, true, C::None),
            Preset::SingleLevelGrnnNonTextual => (S::Grnn, true, C::None),
            Preset::NonTextualGrnn => (S::None, true, C::Grnn),
            Preset::CnnGrnn => (S::Cnn, false, C::Grnn),
            Preset::MultiLevelGrnn => (S::Grnn, false, C::Grnn),
            Preset::CnnNonTextualGrnn => (S::Cnn, true, C::Grnn),
            Preset::MultiLevelGrnnNonTextual => (S::Grnn, true, C::Grnn),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    /// Accepts the canonical names plus spellings such as
    /// `multi-level GRNN+non-textual` or `multi_level_grnn_nontextual`.
    fn from_str(s: &str) -> Result<Self> {
        let mut key: String = s
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '_' || c == '+' { '-' } else { c })
            .collect();
        key = key.replace("nontextual", "non-textual");
        while key.contains("--") {
            key = key.replace("--", "-");
        }
        let key = match key.as_str() {
            "grnn" => "single-level-grnn",
            "grnn-non-textual" => "single-level-grnn-non-textual",
            other => other,
        };
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub sentence_encoder: SentenceEncoderKind,
    pub use_nontextual: bool,
    pub context: ContextKind,
    pub embedding_dim: usize,
    /// Low-level GRU hidden size.
    pub sentence_hidden: usize,
    pub nontextual_hidden: usize,
    pub context_hidden: usize,
    pub cnn_widths: Vec<usize>,
    pub cnn_maps: usize,
    pub gru_bias: bool,
    pub num_classes: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn preset(preset: Preset, vocab_size: usize, num_classes: usize) -> Self {
        let (sentence_encoder, use_nontextual, context) = preset.layout();
        ModelConfig {
            sentence_encoder,
            use_nontextual,
            context,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            sentence_hidden: DEFAULT_HIDDEN,
            nontextual_hidden: DEFAULT_NONTEXTUAL_HIDDEN,
            context_hidden: DEFAULT_HIDDEN,
            cnn_widths: DEFAULT_FILTER_WIDTHS.to_vec(),
            cnn_maps: DEFAULT_FEATURE_MAPS,
            gru_bias: false,
            num_classes,
            vocab_size,
            seed: 0,
        }
    }

    /// The preset this layout matches, if any.
    pub fn preset_name(&self) -> Option<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.layout() == (self.sentence_encoder, self.use_nontextual, self.context))
    }

    pub fn uses_embeddings(&self) -> bool {
        self.sentence_encoder != SentenceEncoderKind::None
    }

    pub fn textual_width(&self) -> usize {
        match self.sentence_encoder {
            SentenceEncoderKind::None => 0,
            SentenceEncoderKind::Grnn => self.sentence_hidden,
            SentenceEncoderKind::Cnn => self.cnn_maps * self.cnn_widths.len(),
        }
    }

    /// Width of the concatenated sentence vector.
    pub fn combined_width(&self) -> usize {
        self.textual_width() + if self.use_nontextual { self.nontextual_hidden } else { 0 }
    }

    pub fn readout_width(&self) -> usize {
        match self.context {
            ContextKind::None => self.combined_width(),
            ContextKind::Grnn => self.context_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sentence_encoder == SentenceEncoderKind::None && !self.use_nontextual {
            return bad("model has no input: enable a sentence encoder or the non-textual features".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        let positive = [
            ("embedding_dim", self.embedding_dim),
            ("sentence_hidden", self.sentence_hidden),
            ("nontextual_hidden", self.nontextual_hidden),
            ("context_hidden", self.context_hidden),
            ("cnn_maps", self.cnn_maps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        if self.uses_embeddings() && self.vocab_size < 3 {
            return bad(format!("vocabulary of {} cannot hold UNK and EMPTY plus words", self.vocab_size));
        }
        if self.sentence_encoder == SentenceEncoderKind::Cnn
            && (self.cnn_widths.is_empty() || self.cnn_widths.contains(&0))
        {
            return bad(format!("bad cnn widths {:?}", self.cnn_widths));
        }
        Ok(())
    }

    /// `key=value` lines, one per field, in a fixed order.
    pub fn to_text(&self) -> String {
        let encoder = match self.sentence_encoder {
            SentenceEncoderKind::None => "none",
            SentenceEncoderKind::Cnn => "cnn",
            SentenceEncoderKind::Grnn => "grnn",
        };
        let context = match self.context {
            ContextKind::None => "none",
            ContextKind::Grnn => "grnn",
        };
        let widths: Vec<String> = self.cnn_widths.iter().map(usize::to_string).collect();
        format!(
            "sentence_encoder={encoder}\nuse_nontextual={}\ncontext={context}\nembedding_dim={}\n\
             sentence_hidden={}\nnontextual_hidden={}\ncontext_hidden={}\ncnn_widths={}\ncnn_maps={}\n\
             gru_bias={}\nnum_classes={}\nvocab_size={}\nseed={}\n",
            self.use_nontextual,
            self.embedding_dim,
            self.sentence_hidden,
            self.nontextual_hidden,
            self.context_hidden,
            widths.join(","),
            self.cnn_maps,
            self.gru_bias,
            self.num_classes,
            self.vocab_size,
            self.seed
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad config line {line:?}")))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::Format(format!("model config lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|e| Error::Format(format!("model config {k}: {e}")))
        };
        let flag = |k: &str| -> Result<bool> {
            get(k)?
                .parse()
                .map_err(|e| Error::Format(format!("model config {k}: {e}")))
        };
        let sentence_encoder = match get("sentence_encoder")? {
            "none" => SentenceEncoderKind::None,
            "cnn" => SentenceEncoderKind::Cnn,
            "grnn" => SentenceEncoderKind::Grnn,
            other => return Err(Error::Format(format!("unknown sentence encoder {other:?}"))),
        };
        let context = match get("context")? {
            "none" => ContextKind::None,
            "grnn" => ContextKind::Grnn,
            other => return Err(Error::Format(format!("unknown context {other:?}"))),
        };
        let widths = get("cnn_widths")?;
        let cnn_widths = if widths.is_empty() {
            Vec::new()
        } else {
            widths
                .split(',')
                .map(|w| w.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("model config cnn_widths: {e}")))?
        };
        Ok(ModelConfig {
            sentence_encoder,
            use_nontextual: flag("use_nontextual")?,
            context,
            embedding_dim: num("embedding_dim")?,
            sentence_hidden: num("sentence_hidden")?,
            nontextual_hidden: num("nontextual_hidden")?,
            context_hidden: num("context_hidden")?,
            cnn_widths,
            cnn_maps: num("cnn_maps")?,
            gru_bias: flag("gru_bias")?,
            num_classes: num("num_classes")?,
            vocab_size: num("vocab_size")?,
            seed: get("seed")?
                .parse()
                .map_err(|e| Error::Format(format!("model config seed: {e}")))?,
        })
    }
}
