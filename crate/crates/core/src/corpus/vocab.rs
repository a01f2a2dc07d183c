use std::collections::HashMap;

use super::record::Conversation;
use super::tokenize::tokenize;
use crate::error::{Error, Result};

pub const UNK_TOKEN: &str = "<UNK>";
pub const EMPTY_TOKEN: &str = "<EMPTY>";

/// Dense token ids. Training tokens come first in order of first appearance,
/// then `UNK` and `EMPTY`. Tokens are lowercased, so the upper-case special
/// names cannot collide with corpus tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from an ordered list of distinct corpus tokens; specials are appended.
    pub fn from_corpus_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for t in tokens {
            v.insert(t);
        }
        v.push_special(UNK_TOKEN);
        v.push_special(EMPTY_TOKEN);
        v
    }

    /// Rebuilds from a full id-ordered listing whose last two entries are the specials.
    pub fn from_listing(listing: Vec<String>) -> Result<Self> {
        let n = listing.len();
        if n < 2 || listing[n - 2] != UNK_TOKEN || listing[n - 1] != EMPTY_TOKEN {
            return Err(Error::Format(format!(
                "vocabulary listing must end with {UNK_TOKEN} and {EMPTY_TOKEN}"
            )));
        }
        let mut ids = HashMap::with_capacity(n);
        for (i, t) in listing.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens: listing, ids })
    }

    fn insert(&mut self, token: String) {
        if !self.ids.contains_key(&token) {
            self.ids.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    fn push_special(&mut self, name: &str) {
        self.ids.insert(name.to_string(), self.tokens.len());
        self.tokens.push(name.to_string());
    }

    /// Including the two specials.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk(&self) -> usize {
        self.tokens.len() - 2
    }

    pub fn empty(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn id(&self, token: &str) -> usize {
        match self.ids.get(token) {
            Some(&i) if i < self.unk() => i,
            _ => self.unk(),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.get(token).is_some_and(|&i| i < self.unk())
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids of a tokenized sentence; an empty sentence becomes `[EMPTY]`.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        if tokens.is_empty() {
            return vec![self.empty()];
        }
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        self.encode(&tokenize(text))
    }
}

/// Every distinct training token gets an id; no frequency cutoff.
pub fn build_vocab(train: &[Conversation]) -> Vocabulary {
    Vocabulary::from_corpus_tokens(
        train
            .iter()
            .flat_map(|c| c.records())
            .flat_map(|r| tokenize(&r.text)),
    )
}
