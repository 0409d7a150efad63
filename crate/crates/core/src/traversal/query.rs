use serde::{Deserialize, Serialize};

use crate::agent::parse::parse_query_reply;
use crate::scene::normalize_label;

/// Target and anchor classes extracted from a referring expression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedQuery {
    pub raw_text: String,
    pub target_class: String,
    pub anchor_classes: Vec<String>,
}

impl ParsedQuery {
    /// Target first, then anchors.
    pub fn relevant_classes(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.target_class.as_str()).chain(self.anchor_classes.iter().map(String::as_str))
    }

    pub fn is_relevant(&self, class_label: &str) -> bool {
        self.relevant_classes().any(|c| c == class_label)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Vocabulary labels in order of first appearance in the query. Matches start
/// at a word boundary (so "chairs" matches `chair`, "vegetable" does not
/// match `table`); at one position the longest label wins and matched spans
/// do not overlap.
pub fn lexicon_matches(raw: &str, vocabulary: &[String]) -> Vec<String> {
    let text = raw.to_lowercase();
    let mut hits: Vec<(usize, usize, &String)> = Vec::new();
    for label in vocabulary {
        let needle = label.replace('_', " ");
        if needle.is_empty() {
            continue;
        }
        for (pos, _) in text.match_indices(&needle) {
            let boundary = text[..pos].chars().next_back().is_none_or(|c| !is_word_char(c));
            if boundary {
                hits.push((pos, needle.len(), label));
            }
        }
    }
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut out: Vec<String> = Vec::new();
    let mut covered = 0usize;
    for (pos, len, label) in hits {
        if pos < covered {
            continue;
        }
        covered = pos + len;
        if !out.contains(label) {
            out.push(label.clone());
        }
    }
    out
}

pub fn lexicon_parse(raw: &str, vocabulary: &[String]) -> Option<ParsedQuery> {
    let mut labels = lexicon_matches(raw, vocabulary).into_iter();
    let target = labels.next()?;
    Some(ParsedQuery {
        raw_text: raw.to_string(),
        target_class: target,
        anchor_classes: labels.collect(),
    })
}

/// Interprets an extraction reply from an agent. Labels are normalized and
/// must belong to the vocabulary; an unknown or missing target means the
/// agent abstained.
pub fn query_from_reply(raw: &str, reply: &str, vocabulary: &[String]) -> Option<ParsedQuery> {
    let (target, anchors) = parse_query_reply(reply)?;
    let target = normalize_label(&target);
    if !vocabulary.contains(&target) {
        return None;
    }
    let mut anchor_classes = Vec::new();
    for a in anchors {
        let a = normalize_label(&a);
        if a != target && vocabulary.contains(&a) && !anchor_classes.contains(&a) {
            anchor_classes.push(a);
        }
    }
    Some(ParsedQuery {
        raw_text: raw.to_string(),
        target_class: target,
        anchor_classes,
    })
}
