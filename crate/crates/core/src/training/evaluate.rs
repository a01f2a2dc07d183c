use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::ConversationInput;
use crate::error::{Error, Result};
use crate::models::Model;

/// Sentence-level accuracy and the gold × predicted confusion grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub correct: u64,
    pub total: u64,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

impl Evaluation {
    pub fn empty(num_classes: usize) -> Self {
        Evaluation {
            correct: 0,
            total: 0,
            confusion: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_predictions(gold: &[usize], predicted: &[usize], num_classes: usize) -> Result<Self> {
        let mut e = Self::empty(num_classes);
        e.record(gold, predicted)?;
        Ok(e)
    }

    fn record(&mut self, gold: &[usize], predicted: &[usize]) -> Result<()> {
        if gold.len() != predicted.len() {
            return Err(Error::Data(format!(
                "{} gold tags against {} predictions",
                gold.len(),
                predicted.len()
            )));
        }
        let k = self.confusion.len();
        for (&g, &p) in gold.iter().zip(predicted) {
            if g >= k || p >= k {
                return Err(Error::Index {
                    what: "class",
                    index: g.max(p),
                    len: k,
                });
            }
            self.confusion[g][p] += 1;
            self.total += 1;
            if g == p {
                self.correct += 1;
            }
        }
        Ok(())
    }

    /// Correct over total; 0 for an empty split.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    /// `None` when the class was never predicted.
    pub fn precision(&self, class: usize) -> Option<f64> {
        let predicted: u64 = self.confusion.iter().map(|row| row[class]).sum();
        (predicted > 0).then(|| self.confusion[class][class] as f64 / predicted as f64)
    }

    /// `None` when the class never occurs in the gold tags.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let actual: u64 = self.confusion[class].iter().sum();
        (actual > 0).then(|| self.confusion[class][class] as f64 / actual as f64)
    }

    /// Per-class precision/recall table with the given class names.
    pub fn to_table(&self, tags: &[String]) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut out = format!(
            "accuracy {:.4} ({} / {})\n{:<16} {:>9} {:>9} {:>8}\n",
            self.accuracy(),
            self.correct,
            self.total,
            "tag",
            "precision",
            "recall",
            "support"
        );
        for c in 0..self.num_classes() {
            let name = tags.get(c).map_or_else(|| c.to_string(), Clone::clone);
            let support: u64 = self.confusion[c].iter().sum();
            out.push_str(&format!(
                "{:<16} {:>9} {:>9} {:>8}\n",
                name,
                fmt(self.precision(c)),
                fmt(self.recall(c)),
                support
            ));
        }
        out
    }
}

/// Predicts every conversation in parallel against the frozen model and
/// tallies the results in input order.
pub fn evaluate(model: &Model, conversations: &[ConversationInput]) -> Result<Evaluation> {
    let predictions: Vec<Vec<usize>> = conversations
        .par_iter()
        .map(|c| model.predict_tags(c))
        .collect::<Result<_>>()?;
    let mut e = Evaluation::empty(model.num_classes());
    for (c, p) in conversations.iter().zip(&predictions) {
        let gold = c
            .gold
            .as_ref()
            .ok_or_else(|| Error::Data(format!("conversation {} has no gold tags", c.id)))?;
        e.record(gold, p)?;
    }
    Ok(e)
}
