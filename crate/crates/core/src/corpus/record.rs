use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Caller {
    A,
    B,
}

impl FromStr for Caller {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(Caller::A),
            "B" => Ok(Caller::B),
            other => Err(Error::Format(format!("caller must be A or B, got {other:?}"))),
        }
    }
}

impl fmt::Display for Caller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Caller::A => "A",
            Caller::B => "B",
        })
    }
}

/// One tagged transcript line.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub conversation_id: String,
    pub caller: Caller,
    pub utterance_index: u32,
    pub sub_utterance_index: u32,
    pub act_tag_raw: String,
    /// Collapsed class id, once resolved against a tag set.
    pub act_tag: Option<usize>,
    pub text: String,
    /// Vocabulary ids, once tokenized.
    pub tokens: Vec<usize>,
}

impl UtteranceRecord {
    pub fn new(
        conversation_id: impl Into<String>,
        caller: Caller,
        utterance_index: u32,
        sub_utterance_index: u32,
        act_tag_raw: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        UtteranceRecord {
            conversation_id: conversation_id.into(),
            caller,
            utterance_index,
            sub_utterance_index,
            act_tag_raw: act_tag_raw.into(),
            act_tag: None,
            text: text.into(),
            tokens: Vec::new(),
        }
    }

    pub fn indices(&self) -> (u32, u32) {
        (self.utterance_index, self.sub_utterance_index)
    }
}

/// An ordered, non-empty sequence of records from one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    id: String,
    records: Vec<UtteranceRecord>,
}

impl Conversation {
    /// Validates the shared id and the index ordering rules: index pairs never
    /// decrease, and a new utterance index starts again at sub-utterance 1.
    pub fn new(records: Vec<UtteranceRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Structure("conversation has no records".into()))?;
        let id = first.conversation_id.clone();
        for (pos, r) in records.iter().enumerate() {
            if r.conversation_id != id {
                return Err(Error::Structure(format!(
                    "record {} belongs to {:?}, expected {id:?}",
                    pos + 1,
                    r.conversation_id
                )));
            }
            if r.utterance_index == 0 || r.sub_utterance_index == 0 {
                return Err(Error::Structure(format!("{id} record {}: indices must be positive", pos + 1)));
            }
        }
        for (pos, pair) in records.windows(2).enumerate() {
            let (prev, next) = (pair[0].indices(), pair[1].indices());
            if next < prev {
                return Err(Error::Structure(format!(
                    "{id} record {}: indices {next:?} regress from {prev:?}",
                    pos + 2
                )));
            }
            if next.0 > prev.0 && next.1 != 1 {
                return Err(Error::Structure(format!(
                    "{id} record {}: utterance {} starts at sub-utterance {}",
                    pos + 2,
                    next.0,
                    next.1
                )));
            }
        }
        Ok(Conversation { id, records })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [UtteranceRecord] {
        &mut self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<UtteranceRecord> {
        self.records
    }
}
