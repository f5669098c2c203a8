//! Shared domain values: task definitions, samples and batches.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Seq2seq,
}

/// Placeholder in `definition_text` replaced by the number of real examples.
pub const N_EXAMPLES_PLACEHOLDER: &str = "{n_examples}";

fn default_target_name() -> String {
    "Label".to_string()
}

fn default_ood_instruction() -> String {
    "The examples listed after the first few show data that is already covered. \
     Write a sample that is as different from them as you can in subject, setting \
     and wording, while still being a valid sample of this dataset."
        .to_string()
}

/// A task the teacher generates data for and the student learns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    /// Task description placed at the top of every generation prompt.
    pub definition_text: String,
    /// Input field names, in rendering order.
    pub fields: Vec<String>,
    /// Canonical label set; empty for seq2seq tasks.
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default = "default_ood_instruction")]
    pub ood_instruction: String,
    /// Marker used for the label/target field when rendering and parsing.
    #[serde(default = "default_target_name")]
    pub target_name: String,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidTask("name is empty".into()));
        }
        if self.definition_text.trim().is_empty() {
            return Err(Error::InvalidTask("definition_text is empty".into()));
        }
        if self.fields.is_empty() {
            return Err(Error::InvalidTask("no input fields".into()));
        }
        let mut seen = HashSet::new();
        for f in self.fields.iter().chain(std::iter::once(&self.target_name)) {
            if f.trim().is_empty() {
                return Err(Error::InvalidTask("empty field name".into()));
            }
            if f.contains(':') || f.contains('\n') {
                return Err(Error::InvalidTask(format!("field name `{f}` contains ':' or newline")));
            }
            if !seen.insert(f.as_str()) {
                return Err(Error::InvalidTask(format!("duplicate field name `{f}`")));
            }
        }
        match self.kind {
            TaskKind::Classification if self.labels.is_empty() => {
                Err(Error::InvalidTask("classification task without labels".into()))
            }
            TaskKind::Classification => {
                let mut norm = HashSet::new();
                for l in &self.labels {
                    let n = crate::label::normalize_label(l);
                    if n.is_empty() || !norm.insert(n) {
                        return Err(Error::InvalidTask(format!(
                            "label `{l}` is empty or not distinct after normalization"
                        )));
                    }
                }
                Ok(())
            }
            TaskKind::Seq2seq => Ok(()),
        }
    }

    /// Checks that `sample` carries every schema field and, for
    /// classification, a canonical label.
    pub fn validate_sample(&self, sample: &Sample) -> Result<()> {
        for f in &self.fields {
            if !sample.inputs.contains_key(f) {
                return Err(Error::MissingField { id: sample.id.clone(), field: f.clone() });
            }
        }
        if self.kind == TaskKind::Classification && !self.labels.contains(&sample.label) {
            return Err(Error::InvalidInput(format!(
                "sample {} has non-canonical label `{}`",
                sample.id, sample.label
            )));
        }
        Ok(())
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Input fields joined in schema order, the text the student sees.
    pub fn input_text(&self, sample: &Sample) -> String {
        let mut out = String::new();
        for f in &self.fields {
            if let Some(v) = sample.inputs.get(f) {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(v);
            }
        }
        out
    }

    /// Built-in task definitions for a few common benchmarks.
    pub fn preset(name: &str) -> Option<TaskSpec> {
        let labels = |ls: &[&str]| ls.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let fields = |fs: &[&str]| fs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let spec = match name.to_ascii_lowercase().as_str() {
            "anli" => TaskSpec {
                name: "ANLI".into(),
                kind: TaskKind::Classification,
                definition_text: "Below are {n_examples} examples of an natural language inference \
                    dataset. Samples include a \"hypothesis\" and a \"premise\". The label of the \
                    sample is: 1. \"entailment\" if the premise entails the hypothesis, 2. \
                    \"neutral\" if the premise neither entails nor contradicts the hypothesis. \
                    3. \"contradiction\" if premise contradicts hypothesis."
                    .into(),
                fields: fields(&["Premise", "Hypothesis"]),
                labels: labels(&["entailment", "neutral", "contradiction"]),
                ood_instruction: default_ood_instruction(),
                target_name: default_target_name(),
            },
            "qnli" => TaskSpec {
                name: "QNLI".into(),
                kind: TaskKind::Classification,
                definition_text: "Below are {n_examples} samples of QNLI dataset. Samples include a \
                    Question and a Sentence. The label of sample is 1.'entailment' if the answer of \
                    the Question is in the Sentence and 2.'not_entailment' if the answer of the \
                    Question is not in the Sentence."
                    .into(),
                fields: fields(&["Sentence", "Question"]),
                labels: labels(&["entailment", "not_entailment"]),
                ood_instruction: default_ood_instruction(),
                target_name: default_target_name(),
            },
            "rte" => TaskSpec {
                name: "RTE".into(),
                kind: TaskKind::Classification,
                definition_text: "Below are {n_examples} samples of RTE dataset. Samples include a \
                    'Sentence1' and a 'Sentence2'. The label of sample is 'entailment' if \
                    'Sentence1' entails 'Sentence2' and 'not_entailment' if 'Sentence1' does not \
                    entail 'Sentence2'."
                    .into(),
                fields: fields(&["Sentence1", "Sentence2"]),
                labels: labels(&["entailment", "not_entailment"]),
                ood_instruction: default_ood_instruction(),
                target_name: default_target_name(),
            },
            "svamp" => TaskSpec {
                name: "SVAMP".into(),
                kind: TaskKind::Seq2seq,
                definition_text: "Below are {n_examples} examples of SVAMP dataset. Samples include \
                    a 'Body' which explains a simple math problem, a 'Question' about the 'Body' \
                    and the 'Equation' that answers it."
                    .into(),
                fields: fields(&["Body", "Question"]),
                labels: Vec::new(),
                ood_instruction: default_ood_instruction(),
                target_name: "Equation".into(),
            },
            _ => return None,
        };
        Some(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Generated,
    Feedback,
    Judge,
}

/// One labeled record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub inputs: BTreeMap<String, String>,
    pub label: String,
    pub provenance: Provenance,
    pub iteration: u64,
}

impl Sample {
    /// Deterministic id: `{seed}-{iteration}-{ordinal}`.
    pub fn make_id(seed: u64, iteration: u64, ordinal: usize) -> String {
        format!("{seed}-{iteration}-{ordinal}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchRole {
    Train,
    Validation,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    samples: Vec<Sample>,
    role: BatchRole,
}

impl Batch {
    pub fn new(samples: Vec<Sample>, role: BatchRole) -> Result<Self> {
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate sample id `{}` in batch", s.id)));
            }
        }
        Ok(Batch { samples, role })
    }

    pub fn empty(role: BatchRole) -> Self {
        Batch { samples: Vec::new(), role }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn role(&self) -> BatchRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }
}

impl<'a> IntoIterator for &'a Batch {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}
