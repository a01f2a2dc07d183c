//! Adam over per-conversation losses, best-validation epoch selection and
//! evaluation.

mod adam;
mod evaluate;
mod train;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use evaluate::{evaluate, Evaluation};
pub use train::{
    best_epoch, train, EpochStats, Splits, TrainConfig, TrainEvent, TrainObserver, TrainReport, DEFAULT_EPOCHS,
};

use crate::corpus::ConversationInput;
use crate::error::Result;
use crate::models::Model;

/// Mean negative log-likelihood of the gold tags over the conversation's sentences.
pub fn conversation_loss(model: &Model, conv: &ConversationInput) -> Result<f64> {
    model.conversation_loss(conv)
}
