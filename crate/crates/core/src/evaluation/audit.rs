use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generation::{build_label_query, generate_many, Generator, PromptText};
use crate::label::canonicalize_label;
use crate::types::{Batch, Sample, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: String,
    pub stored: String,
    /// Canonical judge label, or `None` if the reply did not canonicalize.
    pub judged: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n: usize,
    pub agree: usize,
    pub disagree: usize,
    pub unparseable: usize,
    /// `agree / (agree + disagree)`; `None` when no reply canonicalized.
    pub agreement: Option<f64>,
    pub records: Vec<AuditRecord>,
}

/// Text after the last `Label:` marker, or the whole reply.
fn judged_label(reply: &str) -> &str {
    reply.rfind("Label:").map(|i| &reply[i + "Label:".len()..]).unwrap_or(reply).trim()
}

/// Asks `judge` to label every sample in `samples` few-shot from `x_real`
/// and compares its answers with the stored labels.
pub fn audit_labels<G, R>(
    judge: &G,
    samples: &[Sample],
    task: &TaskSpec,
    x_real: &Batch,
    rng: &mut R,
) -> Result<AuditReport>
where
    G: Generator + ?Sized,
    R: RngCore,
{
    let prompts: Vec<PromptText> = samples.iter().map(|s| build_label_query(task, x_real, s)).collect::<Result<_>>()?;
    let refs: Vec<&PromptText> = prompts.iter().collect();
    let replies = generate_many(judge, &refs, rng)?;
    let mut report =
        AuditReport { n: samples.len(), agree: 0, disagree: 0, unparseable: 0, agreement: None, records: Vec::new() };
    for (s, reply) in samples.iter().zip(&replies) {
        let judged = canonicalize_label(judged_label(&reply.text), task).canonical().map(str::to_owned);
        let stored = canonicalize_label(&s.label, task).canonical().unwrap_or(&s.label);
        match &judged {
            None => report.unparseable += 1,
            Some(j) if j == stored => report.agree += 1,
            Some(_) => report.disagree += 1,
        }
        report.records.push(AuditRecord { id: s.id.clone(), stored: s.label.clone(), judged });
    }
    let parsed = report.agree + report.disagree;
    if parsed > 0 {
        report.agreement = Some(report.agree as f64 / parsed as f64);
    }
    Ok(report)
}
