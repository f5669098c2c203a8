//! Label canonicalization: exact match after normalization, never fuzzy.

use crate::types::{TaskKind, TaskSpec};

/// Lowercases, drops punctuation other than `_` and `-`, and collapses
/// whitespace.
pub fn normalize_label(raw: &str) -> String {
    let mut cleaned = String::with_capacity(raw.len());
    for c in raw.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() || c == '_' || c == '-' {
            cleaned.push(c);
        } else if c.is_whitespace() {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelMatch<'a> {
    Canonical(&'a str),
    NoMatch,
    Ambiguous,
}

/// Maps `raw` onto the task's label set. Returns a rejection value for zero
/// or multiple matches, and [`LabelMatch::NoMatch`] for non-classification
/// tasks.
pub fn canonicalize_label<'a>(raw: &str, task: &'a TaskSpec) -> LabelMatch<'a> {
    if task.kind != TaskKind::Classification {
        return LabelMatch::NoMatch;
    }
    let needle = normalize_label(raw);
    if needle.is_empty() {
        return LabelMatch::NoMatch;
    }
    let mut hits = task.labels.iter().filter(|l| normalize_label(l) == needle);
    match (hits.next(), hits.next()) {
        (Some(l), None) => LabelMatch::Canonical(l),
        (Some(_), Some(_)) => LabelMatch::Ambiguous,
        (None, _) => LabelMatch::NoMatch,
    }
}

impl<'a> LabelMatch<'a> {
    pub fn canonical(&self) -> Option<&'a str> {
        match self {
            LabelMatch::Canonical(l) => Some(l),
            _ => None,
        }
    }
}
