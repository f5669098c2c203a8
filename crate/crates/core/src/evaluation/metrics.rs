use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{canonicalize_label, normalize_label};
use crate::text::{strip_invisible, words};
use crate::types::{Sample, TaskSpec};

/// One scored prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDetail {
    pub index: usize,
    pub prediction: String,
    pub reference: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub details: Vec<PairDetail>,
}

fn check_pairs(preds: &[String], refs: &[String]) -> Result<()> {
    if preds.len() != refs.len() {
        return Err(Error::Dimension { expected: refs.len(), actual: preds.len() });
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    Ok(())
}

fn report(metric: &str, preds: &[String], refs: &[String], mut score: impl FnMut(&str, &str) -> f64) -> MetricReport {
    let details: Vec<PairDetail> = preds
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(index, (p, r))| PairDetail { index, prediction: p.clone(), reference: r.clone(), score: score(p, r) })
        .collect();
    let value = details.iter().map(|d| d.score).sum::<f64>() / details.len() as f64;
    MetricReport { metric: metric.into(), value, n: details.len(), details }
}

fn label_key(raw: &str, task: Option<&TaskSpec>) -> String {
    task.and_then(|t| canonicalize_label(raw, t).canonical().map(str::to_owned)).unwrap_or_else(|| normalize_label(raw))
}

/// Fraction of pairs whose labels agree after canonicalization. Labels that
/// do not canonicalize (or when no task is given) are compared in
/// normalized form.
pub fn accuracy(preds: &[String], refs: &[String], task: Option<&TaskSpec>) -> Result<MetricReport> {
    check_pairs(preds, refs)?;
    Ok(report("accuracy", preds, refs, |p, r| f64::from(u8::from(label_key(p, task) == label_key(r, task)))))
}

/// Casefold, trim, collapse inner whitespace, then drop trailing
/// punctuation.
pub fn normalize_answer(text: &str) -> String {
    let collapsed = words(text, true).join(" ");
    collapsed.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()).to_owned()
}

pub fn exact_match(preds: &[String], refs: &[String]) -> Result<MetricReport> {
    check_pairs(preds, refs)?;
    Ok(report("exact_match", preds, refs, |p, r| f64::from(u8::from(normalize_answer(p) == normalize_answer(r)))))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F-measure with precision and recall weighted equally.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<f64> {
    rouge_l_beta(candidate, reference, 1.0)
}

/// `F = (1 + β²) P R / (R + β² P)` over the longest common subsequence of
/// casefolded whitespace tokens.
pub fn rouge_l_beta(candidate: &str, reference: &str, beta: f64) -> Result<f64> {
    let r = words(reference, true);
    if r.is_empty() {
        return Err(Error::InvalidInput("empty reference".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput("beta must be positive".into()));
    }
    let c = words(candidate, true);
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return Ok(0.0);
    }
    let recall = lcs as f64 / r.len() as f64;
    let precision = lcs as f64 / c.len() as f64;
    let b2 = beta * beta;
    Ok((1.0 + b2) * precision * recall / (recall + b2 * precision))
}

pub fn rouge_l_report(preds: &[String], refs: &[String]) -> Result<MetricReport> {
    check_pairs(preds, refs)?;
    let scores = preds.iter().zip(refs).map(|(p, r)| rouge_l(p, r)).collect::<Result<Vec<f64>>>()?;
    let mut i = 0;
    Ok(report("rouge_l", preds, refs, |_, _| {
        i += 1;
        scores[i - 1]
    }))
}

/// Unique tokens over total tokens, across every input field and label.
pub fn lexical_diversity(corpus: &[Sample]) -> Result<f64> {
    let mut total = 0usize;
    let mut unique = std::collections::HashSet::new();
    for s in corpus {
        for text in s.inputs.values().chain(std::iter::once(&s.label)) {
            for w in words(&strip_invisible(text), true) {
                total += 1;
                unique.insert(w);
            }
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput("corpus has no tokens".into()));
    }
    Ok(unique.len() as f64 / total as f64)
}
