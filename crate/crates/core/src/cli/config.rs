use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{ModelConfig, Preset};
use crate::training::{AdamConfig, TrainConfig};

/// Every recognized key with its default. An empty default means unset.
pub const KEYS: &[(&str, &str)] = &[
    ("accumulate", "1"),
    ("beta1", "0.9"),
    ("beta2", "0.999"),
    ("checkpoint", ""),
    ("clip_norm", ""),
    ("cnn_maps", "100"),
    ("cnn_widths", "2,3,4"),
    ("compare", ""),
    ("context_hidden", "300"),
    ("corpus", ""),
    ("corrupt", ""),
    ("data", ""),
    ("embedding_dim", "300"),
    ("embeddings", ""),
    ("epochs", "10"),
    ("epsilon", "1e-8"),
    ("gru_bias", "false"),
    ("input", ""),
    ("keep_continuations", "false"),
    ("learning_rate", "0.001"),
    ("mapping", ""),
    ("nontextual_hidden", "300"),
    ("out", "."),
    ("preset", "multi-level-grnn-non-textual"),
    ("seed", "0"),
    ("sentence_hidden", "300"),
    ("split", "test"),
    ("test_list", ""),
    ("train_list", ""),
    ("valid_list", ""),
];

/// Flat `key=value` run configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Applies `key=value` lines on top of the current values. Blank lines and
    /// `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key=value, got {line:?}", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.into();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown config key {key:?}"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("{key} is not a config key"))
    }

    /// `None` when the key is empty.
    pub fn opt(&self, key: &str) -> Option<&str> {
        Some(self.get(key)).filter(|v| !v.is_empty())
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.opt(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("missing required setting {key}")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .parse()
            .map_err(|e| Error::Config(format!("{key}={:?}: {e}", self.get(key))))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out"))
    }

    /// Resolved configuration, every key in sorted order.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn preset(&self) -> Result<Preset> {
        self.parse("preset")
    }

    pub fn model_config(&self, vocab_size: usize, num_classes: usize) -> Result<ModelConfig> {
        let mut c = ModelConfig::preset(self.preset()?, vocab_size, num_classes);
        c.embedding_dim = self.parse("embedding_dim")?;
        c.sentence_hidden = self.parse("sentence_hidden")?;
        c.nontextual_hidden = self.parse("nontextual_hidden")?;
        c.context_hidden = self.parse("context_hidden")?;
        c.cnn_maps = self.parse("cnn_maps")?;
        c.cnn_widths = self
            .get("cnn_widths")
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("cnn_widths: {e}")))?;
        c.gru_bias = self.parse("gru_bias")?;
        c.seed = self.parse("seed")?;
        c.validate()?;
        Ok(c)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let seed: u64 = self.parse("seed")?;
        let clip_norm = match self.opt("clip_norm") {
            None => None,
            Some(_) => Some(self.parse::<f64>("clip_norm")?),
        };
        Ok(TrainConfig {
            epochs: self.parse("epochs")?,
            seed: seed.wrapping_add(1),
            adam: AdamConfig {
                learning_rate: self.parse("learning_rate")?,
                beta1: self.parse("beta1")?,
                beta2: self.parse("beta2")?,
                epsilon: self.parse("epsilon")?,
            },
            accumulate: self.parse("accumulate")?,
            clip_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_text("epochs=3\nlearnin_rate=0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("line 2")), "{err}");
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut c = RunConfig::from_text("# comment\n\nepochs = 3\npreset=cnn\n").unwrap();
        c.set("seed", "9").unwrap();
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
        assert_eq!(c.parse::<usize>("epochs").unwrap(), 3);
    }

    #[test]
    fn model_and_training_settings() {
        let c = RunConfig::from_text("preset=cnn+grnn\ncnn_widths=2,5\nclip_norm=5\n").unwrap();
        let m = c.model_config(10, 4).unwrap();
        assert_eq!(m.preset_name(), Some(Preset::CnnGrnn));
        assert_eq!(m.cnn_widths, vec![2, 5]);
        let t = c.train_config().unwrap();
        assert_eq!(t.clip_norm, Some(5.0));
        assert_eq!(t.epochs, 10);
        assert!(matches!(
            RunConfig::from_text("epochs=ten").unwrap().train_config(),
            Err(Error::Config(_))
        ));
    }
}
