use super::record::UtteranceRecord;
use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Sentence-length statistics, frozen from the training split.
///
/// `range` is `max − min` of the word counts and `std` is the population
/// standard deviation; normalized length is `(l − range/2) / std`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthStats {
    range: f64,
    std: f64,
}

impl LengthStats {
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::Data("no sentences to compute length statistics".into()));
        }
        let max = *lengths.iter().max().expect("non-empty");
        let min = *lengths.iter().min().expect("non-empty");
        let n = lengths.len() as f64;
        let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / n;
        let var = lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n;
        Self::from_parts((max - min) as f64, var.sqrt())
    }

    pub fn from_parts(range: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() || !range.is_finite() {
            return Err(Error::Data(format!(
                "length statistics need a positive std, got range {range} std {std}"
            )));
        }
        Ok(LengthStats { range, std })
    }

    /// Statistics over every record of the given conversations.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a UtteranceRecord>) -> Result<Self> {
        let lengths: Vec<usize> = records.into_iter().map(|r| tokenize(&r.text).len()).collect();
        Self::from_lengths(&lengths)
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn normalize(&self, length: usize) -> f64 {
        (length as f64 - self.range / 2.0) / self.std
    }
}

/// `1.0` when the sub-utterance index is 1, else `0.0`.
pub fn same_speaker(sub_utterance_index: u32) -> f64 {
    if sub_utterance_index == 1 {
        1.0
    } else {
        0.0
    }
}

/// `[utterance_index, sub_utterance_index, same_speaker, normalized length]`.
pub fn nontextual_features(r: &UtteranceRecord, stats: &LengthStats) -> [f64; 4] {
    [
        f64::from(r.utterance_index),
        f64::from(r.sub_utterance_index),
        same_speaker(r.sub_utterance_index),
        stats.normalize(tokenize(&r.text).len()),
    ]
}

pub fn extract_nontextual(r: &UtteranceRecord, stats: &LengthStats) -> Tensor {
    Tensor::vector(nontextual_features(r, stats).to_vec()).expect("four features")
}
