//! Field-prefix parser turning teacher completions into samples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generation::RawCompletion;
use crate::label::{canonicalize_label, LabelMatch};
use crate::types::{Batch, BatchRole, Provenance, Sample, TaskKind, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    MissingField { field: String },
    UnknownLabel { raw: String },
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::MissingField { .. } => "missing_field",
            RejectReason::UnknownLabel { .. } => "unknown_label",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub prompt_id: usize,
    #[serde(flatten)]
    pub reason: RejectReason,
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub accepted: Batch,
    pub rejected: Vec<Rejection>,
}

/// How accepted samples are named: `{seed}-{iteration}-{ordinal_offset + prompt_id}`.
#[derive(Debug, Clone, Copy)]
pub struct SampleIds {
    pub seed: u64,
    pub iteration: u64,
    pub ordinal_offset: usize,
}

/// Finds `marker` at or after `from` where the preceding character is not
/// part of a word.
fn find_marker(text: &str, marker: &str, from: usize) -> Option<usize> {
    let mut start = from;
    while let Some(rel) = text[start..].find(marker) {
        let at = start + rel;
        let boundary = text[..at].chars().next_back().is_none_or(|c| !(c.is_alphanumeric() || c == '_'));
        if boundary {
            return Some(at);
        }
        start = at + marker.len();
    }
    None
}

fn clean_value(raw: &str) -> &str {
    let v = raw.trim();
    v.strip_suffix(',').map(str::trim_end).unwrap_or(v)
}

/// Extracts input fields (schema order) and the label from one completion.
pub fn parse_completion(text: &str, task: &TaskSpec) -> Result<(BTreeMap<String, String>, String), RejectReason> {
    let mut markers: Vec<(String, usize)> = Vec::with_capacity(task.fields.len() + 1);
    let mut cursor = 0;
    for name in task.fields.iter().chain(std::iter::once(&task.target_name)) {
        let marker = format!("{name}:");
        let at =
            find_marker(text, &marker, cursor).ok_or_else(|| RejectReason::MissingField { field: name.clone() })?;
        cursor = at + marker.len();
        markers.push((name.clone(), at));
    }

    let mut inputs = BTreeMap::new();
    for (i, field) in task.fields.iter().enumerate() {
        let value_start = markers[i].1 + field.len() + 1;
        let value = clean_value(&text[value_start..markers[i + 1].1]);
        if value.is_empty() {
            return Err(RejectReason::MissingField { field: field.clone() });
        }
        inputs.insert(field.clone(), value.to_string());
    }

    let label_start = markers[task.fields.len()].1 + task.target_name.len() + 1;
    let rest = &text[label_start..];
    let line = rest.split('\n').next().unwrap_or("");
    let raw_label = clean_value(line);
    if raw_label.is_empty() {
        return Err(RejectReason::MissingField { field: task.target_name.clone() });
    }
    let label = match task.kind {
        TaskKind::Classification => match canonicalize_label(raw_label, task) {
            LabelMatch::Canonical(l) => l.to_string(),
            LabelMatch::NoMatch | LabelMatch::Ambiguous => {
                return Err(RejectReason::UnknownLabel { raw: raw_label.to_string() })
            }
        },
        TaskKind::Seq2seq => raw_label.to_string(),
    };
    Ok((inputs, label))
}

/// Parses a batch of completions. Every completion ends up either accepted
/// or rejected; rejection depends only on well-formedness.
pub fn parse_samples(raws: &[RawCompletion], task: &TaskSpec, ids: SampleIds, role: BatchRole) -> ParseOutcome {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for raw in raws {
        match parse_completion(&raw.text, task) {
            Ok((inputs, label)) => accepted.push(Sample {
                id: Sample::make_id(ids.seed, ids.iteration, ids.ordinal_offset + raw.prompt_id),
                inputs,
                label,
                provenance: Provenance::Generated,
                iteration: ids.iteration,
            }),
            Err(reason) => rejected.push(Rejection { prompt_id: raw.prompt_id, reason }),
        }
    }
    let accepted = match Batch::new(accepted, role) {
        Ok(b) => b,
        // prompt ids are unique per call, so ids are too
        Err(e) => unreachable!("{e}"),
    };
    ParseOutcome { accepted, rejected }
}
