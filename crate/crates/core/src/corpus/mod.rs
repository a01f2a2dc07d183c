//! Transcript ingestion: the conversation CSV, tokenization, tag collapsing,
//! vocabulary, non-textual features and split manifests.

mod csv_format;
mod embeddings;
mod encode;
mod features;
mod record;
mod splits;
mod tags;
mod tokenize;
mod vocab;

pub use csv_format::{
    conversation_to_string, parse_conversation, write_conversation, write_conversation_with, HEADER,
};
pub use embeddings::{load_pretrained_embeddings, random_embeddings, EmbeddingCoverage};
pub use encode::{encode_conversation, ConversationInput, SentenceInput};
pub use features::{extract_nontextual, nontextual_features, same_speaker, LengthStats};
pub use record::{Caller, Conversation, UtteranceRecord};
pub use splits::{
    conversation_path, load_conversation_file, load_conversations, load_split_manifest, read_id_list,
    SplitIds, SplitManifest, Splits, EXPECTED_SPLIT_SIZES, FULL_CORPUS_THRESHOLD,
};
pub use tags::{merge_continuations, TagSet, CONTINUATION_TAG, SWDA_MAPPING};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, Vocabulary, EMPTY_TOKEN, UNK_TOKEN};
