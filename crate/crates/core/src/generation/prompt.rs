//! Prompt assembly. A prompt is an ordered concatenation of typed parts;
//! each part's text ends with a newline so the full text is the plain
//! concatenation of the parts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Batch, Sample, TaskSpec, N_EXAMPLES_PLACEHOLDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartKind {
    TaskDef,
    RealExamples,
    TrainExamples,
    FeedbackExamples,
    OodInstruction,
    GenerateInstruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    text: String,
    parts: Vec<(PartKind, String)>,
}

impl PromptText {
    pub fn new(parts: Vec<(PartKind, String)>) -> Result<Self> {
        for (i, (kind, _)) in parts.iter().enumerate() {
            if parts[..i].iter().any(|(k, _)| k == kind) {
                return Err(Error::InvalidInput(format!("prompt part {kind:?} repeated")));
            }
        }
        let text = parts.iter().map(|(_, t)| t.as_str()).collect();
        Ok(PromptText { text, parts })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn parts(&self) -> &[(PartKind, String)] {
        &self.parts
    }

    pub fn part(&self, kind: PartKind) -> Option<&str> {
        self.parts.iter().find(|(k, _)| *k == kind).map(|(_, t)| t.as_str())
    }

    pub fn kinds(&self) -> Vec<PartKind> {
        self.parts.iter().map(|(k, _)| *k).collect()
    }
}

/// Renders the input fields of `sample` as `F1: v1, F2: v2`.
pub fn render_inputs(task: &TaskSpec, sample: &Sample) -> Result<String> {
    let mut out = String::new();
    for (i, field) in task.fields.iter().enumerate() {
        let value = sample
            .inputs
            .get(field)
            .ok_or_else(|| Error::MissingField { id: sample.id.clone(), field: field.clone() })?;
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(field);
        out.push_str(": ");
        out.push_str(value);
    }
    Ok(out)
}

/// Renders one labeled example: `F1: v1, F2: v2, Label: l`.
pub fn render_sample(task: &TaskSpec, sample: &Sample) -> Result<String> {
    let mut out = render_inputs(task, sample)?;
    out.push_str(", ");
    out.push_str(&task.target_name);
    out.push_str(": ");
    out.push_str(&sample.label);
    Ok(out)
}

/// Numbered example lines, numbering starting at `first`.
fn render_examples(task: &TaskSpec, batch: &Batch, first: usize) -> Result<String> {
    let mut out = String::new();
    for (i, s) in batch.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", first + i, render_sample(task, s)?));
    }
    Ok(out)
}

fn task_def(task: &TaskSpec, n_real: usize) -> String {
    let mut t = task.definition_text.replace(N_EXAMPLES_PLACEHOLDER, &n_real.to_string());
    t.push('\n');
    t
}

fn format_hint(task: &TaskSpec) -> String {
    let mut parts: Vec<String> = task.fields.iter().map(|f| format!("{f}: ...")).collect();
    parts.push(format!("{}: ...", task.target_name));
    parts.join(", ")
}

/// The closing request for one novel sample, optionally of a given label.
pub fn generate_instruction(task: &TaskSpec, requested_label: Option<&str>) -> String {
    let name = &task.name;
    let mut t = format!("The above are samples of {name} data. Answer in the same format ({}). ", format_hint(task));
    match requested_label {
        Some(label) => t.push_str(&format!("Give me a novel sample of {name} data with <{label}> label.")),
        None => t.push_str(&format!("Give me a novel sample of {name} data.")),
    }
    t.push('\n');
    t
}

/// Train-generation prompt: task definition, real examples, optional
/// feedback examples, then the generation request.
pub fn build_train_prompt(
    task: &TaskSpec,
    x_real: &Batch,
    x_fb: &Batch,
    requested_label: Option<&str>,
) -> Result<PromptText> {
    if x_real.is_empty() {
        return Err(Error::InvalidInput("train prompt needs at least one real example".into()));
    }
    let mut parts = vec![
        (PartKind::TaskDef, task_def(task, x_real.len())),
        (PartKind::RealExamples, render_examples(task, x_real, 1)?),
    ];
    if !x_fb.is_empty() {
        parts.push((PartKind::FeedbackExamples, render_examples(task, x_fb, x_real.len() + 1)?));
    }
    parts.push((PartKind::GenerateInstruction, generate_instruction(task, requested_label)));
    PromptText::new(parts)
}

/// Validation-generation prompt: task definition, real examples, the
/// current train batch, the OOD instruction, then the generation request.
pub fn build_val_prompt(
    task: &TaskSpec,
    x_real: &Batch,
    x_train: &Batch,
    requested_label: Option<&str>,
) -> Result<PromptText> {
    if x_train.is_empty() {
        return Err(Error::InvalidInput("validation prompt needs a non-empty train batch".into()));
    }
    let mut ood = task.ood_instruction.clone();
    ood.push('\n');
    PromptText::new(vec![
        (PartKind::TaskDef, task_def(task, x_real.len())),
        (PartKind::RealExamples, render_examples(task, x_real, 1)?),
        (PartKind::TrainExamples, render_examples(task, x_train, x_real.len() + 1)?),
        (PartKind::OodInstruction, ood),
        (PartKind::GenerateInstruction, generate_instruction(task, requested_label)),
    ])
}

/// Label requested for the `k`-th request of a run, round-robin over the
/// label set. `None` for seq2seq tasks or when rotation is off.
pub fn rotated_label(task: &TaskSpec, k: u64, enabled: bool) -> Option<&str> {
    if !enabled || task.labels.is_empty() {
        return None;
    }
    Some(&task.labels[(k % task.labels.len() as u64) as usize])
}

/// Prompt asking a judge which label a sample carries.
pub fn build_label_query(task: &TaskSpec, x_real: &Batch, sample: &Sample) -> Result<PromptText> {
    let mut parts = vec![(PartKind::TaskDef, task_def(task, x_real.len()))];
    if !x_real.is_empty() {
        parts.push((PartKind::RealExamples, render_examples(task, x_real, 1)?));
    }
    parts.push((
        PartKind::GenerateInstruction,
        format!(
            "What is the label of the below sample? Reply with the label only.\n{}\n",
            render_inputs(task, sample)?
        ),
    ));
    PromptText::new(parts)
}
