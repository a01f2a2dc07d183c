//! The ten architectures and their per-conversation forward pass.

mod checkpoint;
mod config;
mod model;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{ContextKind, ModelConfig, Preset, SentenceEncoderKind, DEFAULT_HIDDEN, DEFAULT_NUM_CLASSES};
pub use model::{argmax_tag, LossAndGradients, Model, SentenceEncoder, SentenceVector};
