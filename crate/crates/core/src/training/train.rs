use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
use super::evaluate::{evaluate, Evaluation};
use crate::corpus::ConversationInput;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::numcore::Tensor;

pub const DEFAULT_EPOCHS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub adam: AdamConfig,
    /// Conversations whose gradients are averaged into one update.
    pub accumulate: usize,
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            adam: AdamConfig::default(),
            accumulate: 1,
            clip_norm: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Splits<'a> {
    pub train: &'a [ConversationInput],
    pub valid: &'a [ConversationInput],
    pub test: &'a [ConversationInput],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean conversation loss over the epoch's updates.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub valid_accuracy: f64,
    /// Absent when the test split is empty.
    pub test_accuracy: Option<f64>,
    /// Test confusion at the best epoch, `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub tags: Vec<String>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>5}  {:>12}  {:>9}  {:>9}\n",
            "epoch", "train_loss", "train_acc", "valid_acc"
        );
        for e in &self.epochs {
            let mark = if e.epoch == self.best_epoch { " *" } else { "" };
            out.push_str(&format!(
                "{:>5}  {:>12.6}  {:>9.4}  {:>9.4}{mark}\n",
                e.epoch, e.train_loss, e.train_accuracy, e.valid_accuracy
            ));
        }
        out.push_str(&format!("best epoch {}\n", self.best_epoch));
        match self.test_accuracy {
            Some(a) => out.push_str(&format!("test accuracy {a:.4}\n")),
            None => out.push_str("test accuracy -\n"),
        }
        out
    }
}

/// Progress notifications from [`train`].
#[derive(Debug)]
pub enum TrainEvent<'a> {
    EpochStarted { epoch: usize, order: &'a [usize] },
    Step { epoch: usize, conversation: &'a ConversationInput, loss: f64 },
    EpochFinished(&'a EpochStats),
    /// The model holds the parameters of the new best epoch.
    NewBest { epoch: usize, model: &'a Model },
}

pub trait TrainObserver {
    fn on_event(&mut self, event: TrainEvent<'_>) -> Result<()>;
}

impl TrainObserver for () {
    fn on_event(&mut self, _: TrainEvent<'_>) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(TrainEvent<'_>) -> Result<()>> TrainObserver for F {
    fn on_event(&mut self, event: TrainEvent<'_>) -> Result<()> {
        self(event)
    }
}

/// 1-based index of the highest accuracy, earliest on ties.
pub fn best_epoch(valid_accuracies: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &a) in valid_accuracies.iter().enumerate() {
        if best.map_or(true, |(_, b)| a > b) {
            best = Some((i + 1, a));
        }
    }
    best.map(|(i, _)| i)
}

/// Trains with one Adam update per conversation (or per `accumulate`
/// conversations), keeps the parameters of the best validation epoch, and
/// reports test accuracy for them. On return `model` holds the best parameters.
pub fn train(
    model: &mut Model,
    splits: Splits<'_>,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainReport> {
    if splits.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if splits.valid.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    if config.epochs == 0 || config.accumulate == 0 {
        return Err(Error::Config("epochs and accumulate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(model.params(), config.adam);
    let mut order: Vec<usize> = (0..splits.train.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        observer.on_event(TrainEvent::EpochStarted { epoch, order: &order })?;
        let mut loss_sum = 0.0;
        let mut pending: Option<Vec<Tensor>> = None;
        let mut pending_count = 0usize;
        for &i in &order {
            let conv = &splits.train[i];
            let r = model.loss_and_gradients(conv)?;
            loss_sum += r.loss;
            observer.on_event(TrainEvent::Step {
                epoch,
                conversation: conv,
                loss: r.loss,
            })?;
            match pending.as_mut() {
                None => pending = Some(r.gradients),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&r.gradients) {
                        a.add_assign(g)?;
                    }
                }
            }
            pending_count += 1;
            if pending_count == config.accumulate {
                apply(model, &mut adam, pending.take().expect("pending"), pending_count, config)?;
                pending_count = 0;
            }
        }
        if let Some(g) = pending.take() {
            apply(model, &mut adam, g, pending_count, config)?;
        }

        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / splits.train.len() as f64,
            train_accuracy: evaluate(model, splits.train)?.accuracy(),
            valid_accuracy: evaluate(model, splits.valid)?.accuracy(),
        };
        info!(
            "epoch {epoch}: loss {:.6} train {:.4} valid {:.4}",
            stats.train_loss, stats.train_accuracy, stats.valid_accuracy
        );
        observer.on_event(TrainEvent::EpochFinished(&stats))?;
        if best.as_ref().map_or(true, |(_, acc, _)| stats.valid_accuracy > *acc) {
            best = Some((epoch, stats.valid_accuracy, model.clone()));
            observer.on_event(TrainEvent::NewBest { epoch, model })?;
        }
        epochs.push(stats);
    }

    let (best_epoch, valid_accuracy, best_model) = best.expect("at least one epoch");
    *model = best_model;
    let test = if splits.test.is_empty() {
        None
    } else {
        Some(evaluate(model, splits.test)?)
    };
    Ok(TrainReport {
        epochs,
        best_epoch,
        valid_accuracy,
        test_accuracy: test.as_ref().map(Evaluation::accuracy),
        confusion: test.map_or_else(|| Evaluation::empty(model.num_classes()).confusion, |e| e.confusion),
        tags: Vec::new(),
    })
}

fn apply(model: &mut Model, adam: &mut AdamState, mut grads: Vec<Tensor>, n: usize, config: &TrainConfig) -> Result<()> {
    if n > 1 {
        let c = 1.0 / n as f64;
        grads.iter_mut().for_each(|g| g.scale_in_place(c));
    }
    if let Some(max) = config.clip_norm {
        clip_global_norm(&mut grads, max);
    }
    adam_step(model.params_mut(), &grads, adam)
}
