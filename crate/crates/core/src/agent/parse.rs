//! Extraction of the action object from free-form model output.
//!
//! The object itself is strict (exactly one key, `NextAction`, integer
//! value) while surrounding prose and code fences are ignored. When several
//! well-formed objects appear the last one wins.

use serde_json::Value;
use thiserror::Error;

use crate::traversal::CandidateMenu;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("reply contains no {{\"NextAction\": <number>}} object")]
    MalformedReply,
    #[error("action {0} is not on the menu")]
    OutOfRange(i64),
}

/// Every JSON object embedded in `text`, in order of their opening brace.
/// Nested objects are reported on their own as well.
fn embedded_objects(text: &str) -> Vec<serde_json::Map<String, Value>> {
    let mut out = Vec::new();
    for (start, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            out.push(map);
        }
    }
    out
}

fn action_value(map: &serde_json::Map<String, Value>) -> Option<i64> {
    if map.len() != 1 {
        return None;
    }
    map.get("NextAction")?.as_i64()
}

/// Last well-formed action integer in the text, unvalidated.
pub fn extract_action(raw_text: &str) -> Option<i64> {
    embedded_objects(raw_text).iter().rev().find_map(action_value)
}

pub fn parse_action(raw_text: &str, menu: &CandidateMenu) -> Result<u32, ParseError> {
    let value = extract_action(raw_text).ok_or(ParseError::MalformedReply)?;
    match u32::try_from(value) {
        Ok(index) if menu.get(index).is_some() => Ok(index),
        _ => Err(ParseError::OutOfRange(value)),
    }
}

/// `{"target": <label>, "anchors": [<labels>]}`; last match wins.
pub fn parse_query_reply(raw_text: &str) -> Option<(String, Vec<String>)> {
    embedded_objects(raw_text).iter().rev().find_map(|map| {
        let target = map.get("target")?.as_str()?.to_string();
        let anchors = match map.get("anchors") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items.iter().filter_map(|v| v.as_str().map(str::to_string)).collect(),
            Some(_) => return None,
        };
        Some((target, anchors))
    })
}
