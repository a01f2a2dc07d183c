use super::features::{nontextual_features, LengthStats};
use super::record::Conversation;
use super::vocab::Vocabulary;

/// Model-ready form of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceInput {
    pub tokens: Vec<usize>,
    pub features: [f64; 4],
}

/// Model-ready form of one conversation; `gold` is present when every record
/// carries a resolved tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversationInput {
    pub id: String,
    pub sentences: Vec<SentenceInput>,
    pub gold: Option<Vec<usize>>,
}

impl ConversationInput {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Tokenizes each record against `vocab` and computes its features.
pub fn encode_conversation(conv: &Conversation, vocab: &Vocabulary, stats: &LengthStats) -> ConversationInput {
    let sentences = conv
        .records()
        .iter()
        .map(|r| SentenceInput {
            tokens: vocab.encode_text(&r.text),
            features: nontextual_features(r, stats),
        })
        .collect();
    let gold = conv.records().iter().map(|r| r.act_tag).collect();
    ConversationInput {
        id: conv.id().to_string(),
        sentences,
        gold,
    }
}
