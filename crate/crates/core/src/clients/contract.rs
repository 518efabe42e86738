//! Validation of chat-model replies.

use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::scene_map::SceneMap;

/// Nouns that may not stand as the subject of a canonical phrase.
pub const FORBIDDEN_SUBJECTS: [&str; 10] =
    ["object", "thing", "item", "stuff", "part", "area", "region", "section", "portion", "surface"];

const BACKGROUND_PREFIX: &str = "background:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("reply is not a single JSON line")]
    NotSingleJsonLine,
    #[error("reply is not a single line")]
    NotSingleLine,
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("field {0:?} has the wrong type")]
    FieldType(&'static str),
    #[error("ids is empty")]
    EmptyIds,
    #[error("{ids} ids but {captions} captions")]
    LengthMismatch { ids: usize, captions: usize },
    #[error("id {0} is not in the scene map")]
    UnknownId(u32),
    #[error("caption for id {id} does not match the scene map")]
    CaptionMismatch { id: u32 },
    #[error("id {0} listed twice")]
    DuplicateId(u32),
    #[error("canonical phrase is empty")]
    EmptyPhrase,
    #[error("canonical phrase has an empty comma-separated part")]
    EmptyPart,
    #[error("forbidden subject noun {0:?}")]
    ForbiddenSubject(String),
}

/// Validated retrieval reply; ids ascending, captions parallel to ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalResult {
    pub ids: Vec<u32>,
    pub captions: Vec<String>,
    pub candidates: Option<Vec<u32>>,
}

/// Lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// First comma-separated part, lowercased, with any "background:" prefix
/// removed and whitespace collapsed.
pub fn leading_noun(phrase: &str) -> String {
    let first = phrase.split(',').next().unwrap_or("").trim().to_lowercase();
    let first = first.strip_prefix(BACKGROUND_PREFIX).unwrap_or(&first);
    first.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalize_phrase(phrase: &str) -> Result<String, ContractError> {
    let parts: Vec<String> = phrase
        .split(',')
        .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    if parts.iter().all(String::is_empty) {
        return Err(ContractError::EmptyPhrase);
    }
    if parts.iter().any(String::is_empty) {
        return Err(ContractError::EmptyPart);
    }
    Ok(parts.join(", "))
}

/// Checks the `<noun>[, <details>][, <placement>]` shape and the subject
/// noun; returns the whitespace-normalized phrase.
pub fn validate_canonical_phrase(phrase: &str) -> Result<String, ContractError> {
    let phrase = normalize_phrase(phrase)?;
    let noun = leading_noun(&phrase);
    let words: Vec<&str> = noun.split_whitespace().collect();
    if words.is_empty() {
        return Err(ContractError::EmptyPart);
    }
    for w in [words[0], words[words.len() - 1]] {
        if FORBIDDEN_SUBJECTS.contains(&w) {
            return Err(ContractError::ForbiddenSubject(w.to_string()));
        }
    }
    Ok(phrase)
}

fn single_line(text: &str) -> Option<&str> {
    let t = text.trim();
    (!t.is_empty() && !t.contains('\n') && !t.contains('\r')).then_some(t)
}

fn json_object_line(text: &str) -> Result<serde_json::Map<String, Value>, ContractError> {
    let line = single_line(text).ok_or(ContractError::NotSingleJsonLine)?;
    if !line.starts_with('{') || !line.ends_with('}') {
        return Err(ContractError::NotSingleJsonLine);
    }
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ContractError::NotSingleJsonLine),
        Err(e) => Err(ContractError::InvalidJson(e.to_string())),
    }
}

/// Parses a `{"canonical": "..."}` reply line.
pub fn parse_canonical(text: &str) -> Result<String, ContractError> {
    let map = json_object_line(text)?;
    match map.get("canonical") {
        None => Err(ContractError::MissingField("canonical")),
        Some(Value::String(s)) => validate_canonical_phrase(s),
        Some(_) => Err(ContractError::FieldType("canonical")),
    }
}

/// Parses a plain one-line canonical caption. Word counts outside 12 to 20
/// are logged, not rejected.
pub fn parse_caption_line(text: &str) -> Result<String, ContractError> {
    let line = single_line(text).ok_or(ContractError::NotSingleLine)?;
    let line = line.trim_end_matches('.');
    let phrase = validate_canonical_phrase(line)?;
    let words = phrase.split_whitespace().count();
    if !(12..=20).contains(&words) {
        log::debug!("canonical caption has {words} words (expected 12 to 20): {phrase:?}");
    }
    Ok(phrase)
}

fn id_value(v: &Value, field: &'static str) -> Result<u32, ContractError> {
    v.as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or(ContractError::FieldType(field))
}

/// Parses and validates a retrieval reply against the scene map.
pub fn parse_retrieval(text: &str, map: &SceneMap) -> Result<RetrievalResult, ContractError> {
    let obj = json_object_line(text)?;
    let ids = obj.get("ids").ok_or(ContractError::MissingField("ids"))?;
    let captions = obj.get("captions").ok_or(ContractError::MissingField("captions"))?;
    let ids = ids.as_array().ok_or(ContractError::FieldType("ids"))?;
    let captions = captions.as_array().ok_or(ContractError::FieldType("captions"))?;
    if ids.is_empty() {
        return Err(ContractError::EmptyIds);
    }
    if ids.len() != captions.len() {
        return Err(ContractError::LengthMismatch { ids: ids.len(), captions: captions.len() });
    }
    let mut pairs = Vec::with_capacity(ids.len());
    let mut seen = BTreeSet::new();
    for (id, cap) in ids.iter().zip(captions) {
        let id = id_value(id, "ids")?;
        let cap = cap.as_str().ok_or(ContractError::FieldType("captions"))?;
        let entry = map.get(id).ok_or(ContractError::UnknownId(id))?;
        if entry.caption != cap {
            return Err(ContractError::CaptionMismatch { id });
        }
        if !seen.insert(id) {
            return Err(ContractError::DuplicateId(id));
        }
        pairs.push((id, cap.to_string()));
    }
    pairs.sort();
    let candidates = match obj.get("candidates") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                let id = match item {
                    Value::Object(o) => id_value(o.get("id").ok_or(ContractError::MissingField("id"))?, "candidates")?,
                    other => id_value(other, "candidates")?,
                };
                if map.get(id).is_none() {
                    return Err(ContractError::UnknownId(id));
                }
                out.push(id);
            }
            Some(out)
        }
        Some(_) => return Err(ContractError::FieldType("candidates")),
    };
    let (ids, captions) = pairs.into_iter().unzip();
    Ok(RetrievalResult { ids, captions, candidates })
}

/// Single-line JSON form accepted by [`parse_retrieval`].
pub fn format_retrieval(result: &RetrievalResult) -> String {
    #[derive(Serialize)]
    struct Candidate {
        id: u32,
    }
    #[derive(Serialize)]
    struct Reply<'a> {
        ids: &'a [u32],
        captions: &'a [String],
        #[serde(skip_serializing_if = "Option::is_none")]
        candidates: Option<Vec<Candidate>>,
    }
    let reply = Reply {
        ids: &result.ids,
        captions: &result.captions,
        candidates: result.candidates.as_ref().map(|c| c.iter().map(|&id| Candidate { id }).collect()),
    };
    serde_json::to_string(&reply).expect("reply serializes")
}
