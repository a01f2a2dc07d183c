//! Dialog-act tagging with hierarchical gated recurrent networks.
//!
//! The crate is layered bottom-up:
//!
//! - [`numcore`]: dense tensors and a tape-based reverse-mode engine.
//! - [`layers`]: embedding lookup, the GRU cell, GRNN and CNN sentence
//!   encoders, and the feed-forward branch for non-textual features.
//! - [`corpus`]: transcript CSV ingestion, tokenization, tag collapsing,
//!   vocabulary, length statistics and split manifests.
//! - [`models`]: the ten model presets and per-conversation forward passes,
//!   plus the binary checkpoint format.
//! - [`training`]: Adam, the epoch loop with best-validation selection, and
//!   evaluation.
//! - [`gradsuite`]: finite-difference checks over all of the above.
//! - [`cli`]: the `dactag` command surface.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod gradsuite;
pub mod layers;
pub mod models;
pub mod numcore;
pub mod training;

pub use error::{Error, Result};
