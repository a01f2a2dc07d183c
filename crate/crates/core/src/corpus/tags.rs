//! Act-tag collapsing.
//!
//! The mapping is a TSV of `raw_prefix<TAB>collapsed_tag` lines (`#` starts a
//! comment). A raw tag resolves by exact match first, then by the longest
//! mapping prefix it starts with. Class ids follow the first appearance of each
//! collapsed tag in the mapping.

use std::collections::{BTreeMap, HashMap};

use super::record::{Conversation, UtteranceRecord};
use crate::error::{Error, Result};

/// Raw tag of a line that continues the same speaker's interrupted utterance.
pub const CONTINUATION_TAG: &str = "+";

/// Collapse table bundled with the crate.
pub const SWDA_MAPPING: &str = include_str!("../../data/swda_tags.tsv");

#[derive(Debug, Clone, PartialEq)]
pub struct TagSet {
    prefixes: BTreeMap<String, String>,
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagSet {
    /// Parses a mapping. With `keep_continuations` the `+` tag is its own class;
    /// otherwise continuation lines are expected to be merged away beforehand
    /// (see [`merge_continuations`]) and `+` gets no class id.
    pub fn parse_mapping(text: &str, keep_continuations: bool) -> Result<Self> {
        let mut prefixes = BTreeMap::new();
        let mut order = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 || fields[0].is_empty() || fields[1].trim().is_empty() {
                return Err(Error::Mapping {
                    line: line_no,
                    message: format!("expected raw_prefix<TAB>collapsed_tag, got {line:?}"),
                });
            }
            let (prefix, tag) = (fields[0].to_string(), fields[1].trim().to_string());
            if let Some(prev) = prefixes.get(&prefix) {
                if prev != &tag {
                    return Err(Error::Mapping {
                        line: line_no,
                        message: format!("prefix {prefix:?} already maps to {prev:?}"),
                    });
                }
            }
            if !order.contains(&tag) {
                order.push(tag.clone());
            }
            prefixes.insert(prefix, tag);
        }
        if prefixes.is_empty() {
            return Err(Error::Mapping {
                line: 0,
                message: "mapping has no entries".into(),
            });
        }
        if !keep_continuations {
            order.retain(|t| t != CONTINUATION_TAG);
        }
        let index = order.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(TagSet {
            prefixes,
            tags: order,
            index,
        })
    }

    /// The bundled collapse table.
    pub fn swda(keep_continuations: bool) -> Self {
        Self::parse_mapping(SWDA_MAPPING, keep_continuations).expect("bundled mapping parses")
    }

    /// A tag set known only by its class list, as stored in checkpoints; every
    /// class name maps to itself.
    pub fn from_tags(tags: Vec<String>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, t) in tags.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate tag {t:?}")));
            }
        }
        let prefixes = tags.iter().map(|t| (t.clone(), t.clone())).collect();
        Ok(TagSet { prefixes, tags, index })
    }

    /// Number of classes.
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Collapsed tag name for a raw tag.
    pub fn collapse_name(&self, raw: &str) -> Result<&str> {
        if let Some(t) = self.prefixes.get(raw) {
            return Ok(t);
        }
        // Every prefix of `raw` that is a key sorts at or before `raw`; walk
        // candidates from the longest.
        (1..raw.len())
            .rev()
            .filter(|&n| raw.is_char_boundary(n))
            .find_map(|n| self.prefixes.get(&raw[..n]))
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownTag(raw.to_string()))
    }

    /// Class id for a raw tag.
    pub fn collapse(&self, raw: &str) -> Result<usize> {
        let name = self.collapse_name(raw)?;
        self.encode(name).ok_or_else(|| Error::UnknownTag(raw.to_string()))
    }

    pub fn encode(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn decode(&self, id: usize) -> Option<&str> {
        self.tags.get(id).map(String::as_str)
    }

    /// Resolves every record's raw tag to a class id.
    pub fn annotate(&self, conv: &mut Conversation) -> Result<()> {
        for r in conv.records_mut() {
            r.act_tag = Some(self.collapse(&r.act_tag_raw)?);
        }
        Ok(())
    }
}

/// Folds each `+` line into the previous line of the same caller (text joined
/// with a space, tag and indices inherited from that line). A continuation
/// with no earlier line from its caller is dropped. Returns the merged
/// conversation and the number of lines folded or dropped.
pub fn merge_continuations(conv: Conversation) -> Result<(Conversation, usize)> {
    let id = conv.id().to_string();
    let mut out: Vec<UtteranceRecord> = Vec::with_capacity(conv.len());
    let mut folded = 0;
    for r in conv.into_records() {
        if r.act_tag_raw != CONTINUATION_TAG {
            out.push(r);
            continue;
        }
        folded += 1;
        match out.iter_mut().rev().find(|p| p.caller == r.caller) {
            Some(prev) => {
                let text = r.text.trim();
                if !text.is_empty() {
                    if !prev.text.is_empty() {
                        prev.text.push(' ');
                    }
                    prev.text.push_str(text);
                }
            }
            None => log::warn!(
                "{id}: continuation at ({}, {}) has no earlier line from caller {}; dropped",
                r.utterance_index,
                r.sub_utterance_index,
                r.caller
            ),
        }
    }
    if out.is_empty() {
        return Err(Error::Structure(format!("{id}: nothing left after merging continuations")));
    }
    Ok((Conversation::new(out)?, folded))
}
