//! The normalized conversation CSV.
//!
//! Header `conversation_id,caller,utterance_index,sub_utterance_index,act_tag,text`,
//! UTF-8, LF line endings. The text field is always double-quoted with embedded
//! quotes doubled; the other fields are written bare.

use std::io::{Read, Write};

use super::record::{Conversation, UtteranceRecord};
use crate::error::{Error, Result};

pub const HEADER: [&str; 6] = [
    "conversation_id",
    "caller",
    "utterance_index",
    "sub_utterance_index",
    "act_tag",
    "text",
];

/// Parses one conversation. The header row is optional on input.
pub fn parse_conversation<R: Read>(source: R) -> Result<Conversation> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if i == 0 && row.iter().eq(HEADER.iter().copied()) {
            continue;
        }
        if row.len() != HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", HEADER.len(), row.len()),
            });
        }
        let bad = |what: &str, e: &dyn std::fmt::Display| Error::Parse {
            line,
            message: format!("{what}: {e}"),
        };
        let caller = row[1].parse().map_err(|e| bad("caller", &e))?;
        let utterance_index = row[2].parse().map_err(|e| bad("utterance_index", &e))?;
        let sub_utterance_index = row[3].parse().map_err(|e| bad("sub_utterance_index", &e))?;
        if row[0].is_empty() {
            return Err(bad("conversation_id", &"empty"));
        }
        records.push(UtteranceRecord::new(
            &row[0],
            caller,
            utterance_index,
            sub_utterance_index,
            &row[4],
            &row[5],
        ));
    }
    Conversation::new(records)
}

fn quote(text: &str) -> String {
    format!("\"{}\"", text.replace('"', "\"\""))
}

fn bare(field: &str) -> Result<&str> {
    if field.contains([',', '"', '\n', '\r']) {
        return Err(Error::Format(format!("field {field:?} cannot be written unquoted")));
    }
    Ok(field)
}

/// Writes `conv` with the header, one line per record. `tag_name` picks the
/// act-tag column for each record.
pub fn write_conversation_with<W: Write>(
    mut out: W,
    conv: &Conversation,
    tag_name: impl Fn(&UtteranceRecord) -> String,
) -> Result<()> {
    writeln!(out, "{}", HEADER.join(","))?;
    for r in conv.records() {
        let tag = tag_name(r);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            bare(&r.conversation_id)?,
            r.caller,
            r.utterance_index,
            r.sub_utterance_index,
            bare(&tag)?,
            quote(&r.text)
        )?;
    }
    Ok(())
}

/// Writes `conv` with the raw act tags.
pub fn write_conversation<W: Write>(out: W, conv: &Conversation) -> Result<()> {
    write_conversation_with(out, conv, |r| r.act_tag_raw.clone())
}

pub fn conversation_to_string(conv: &Conversation) -> Result<String> {
    let mut buf = Vec::new();
    write_conversation(&mut buf, conv)?;
    Ok(String::from_utf8(buf).expect("written from UTF-8 strings"))
}
