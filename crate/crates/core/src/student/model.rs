use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::student::features::{featurize, FeatureConfig, SparseVec};
use crate::student::loss::{argmax, log_softmax};
use crate::types::{Sample, TaskKind, TaskSpec};

/// Byte-level output vocabulary: 256 byte values plus begin/end markers.
pub const BYTE_VOCAB: usize = 258;
pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const DEFAULT_MAX_LEN: usize = 64;

const MAGIC: &[u8; 8] = b"KDGSTUD\0";
const VERSION: u32 = 1;

/// Target token ids for `text`: its bytes followed by EOS, cut at `max_len`.
pub fn encode_target(text: &str, max_len: usize) -> Vec<u32> {
    text.bytes().map(u32::from).chain(std::iter::once(EOS)).take(max_len).collect()
}

/// Bytes up to the first EOS, BOS skipped.
pub fn decode_tokens(tokens: &[u32]) -> String {
    let bytes: Vec<u8> = tokens.iter().take_while(|&&t| t != EOS).filter(|&&t| t < 256).map(|&t| t as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqOutput {
    pub logits: Vec<Vec<f64>>,
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct ModelMeta {
    kind: TaskKind,
    features: FeatureConfig,
    n_outputs: usize,
    max_len: usize,
}

/// Linear student over hashed n-gram features.
///
/// Classification keeps one `C x D` matrix. Seq2seq keeps one `K x D`
/// matrix per output position (`max_len` of them); position `i` logits
/// depend only on the input features.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    meta: ModelMeta,
    weights: Vec<f64>,
}

impl StudentModel {
    pub fn classifier(features: FeatureConfig, n_classes: usize) -> Result<Self> {
        features.validate()?;
        if n_classes == 0 {
            return Err(Error::InvalidConfig("classifier needs at least one class".into()));
        }
        let len = n_classes * features.hash_dim;
        Ok(StudentModel {
            meta: ModelMeta { kind: TaskKind::Classification, features, n_outputs: n_classes, max_len: 1 },
            weights: vec![0.0; len],
        })
    }

    pub fn seq2seq(features: FeatureConfig, max_len: usize) -> Result<Self> {
        features.validate()?;
        if max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be positive".into()));
        }
        let len = max_len * BYTE_VOCAB * features.hash_dim;
        Ok(StudentModel {
            meta: ModelMeta { kind: TaskKind::Seq2seq, features, n_outputs: BYTE_VOCAB, max_len },
            weights: vec![0.0; len],
        })
    }

    /// Zero-initialized student shaped for `task`.
    pub fn for_task(task: &TaskSpec, features: FeatureConfig, max_len: usize) -> Result<Self> {
        match task.kind {
            TaskKind::Classification => Self::classifier(features, task.labels.len()),
            TaskKind::Seq2seq => Self::seq2seq(features, max_len),
        }
    }

    pub fn kind(&self) -> TaskKind {
        self.meta.kind
    }

    pub fn features(&self) -> &FeatureConfig {
        &self.meta.features
    }

    /// `C` for classification, `K` for seq2seq.
    pub fn n_outputs(&self) -> usize {
        self.meta.n_outputs
    }

    pub fn max_len(&self) -> usize {
        self.meta.max_len
    }

    pub fn dim(&self) -> usize {
        self.meta.features.hash_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Row-major row for (position, output).
    pub(crate) fn row_offset(&self, position: usize, output: usize) -> usize {
        (position * self.meta.n_outputs + output) * self.dim()
    }

    pub fn featurize_sample(&self, task: &TaskSpec, sample: &Sample) -> SparseVec {
        featurize(&task.input_text(sample), &self.meta.features)
    }

    fn check_dim(&self, x: &SparseVec) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), actual: x.dim() });
        }
        Ok(())
    }

    fn position_logits(&self, x: &SparseVec, position: usize) -> Vec<f64> {
        let d = self.dim();
        (0..self.meta.n_outputs)
            .map(|k| {
                let off = self.row_offset(position, k);
                x.dot(&self.weights[off..off + d])
            })
            .collect()
    }

    /// Raw class logits `W x`.
    pub fn forward_classify(&self, x: &SparseVec) -> Result<Vec<f64>> {
        if self.meta.kind != TaskKind::Classification {
            return Err(Error::InvalidInput("forward_classify on a seq2seq student".into()));
        }
        self.check_dim(x)?;
        Ok(self.position_logits(x, 0))
    }

    /// Logits for the first `out_len` positions and their argmax tokens.
    pub fn forward_seq(&self, x: &SparseVec, out_len: usize) -> Result<SeqOutput> {
        if self.meta.kind != TaskKind::Seq2seq {
            return Err(Error::InvalidInput("forward_seq on a classification student".into()));
        }
        self.check_dim(x)?;
        if out_len > self.meta.max_len {
            return Err(Error::Dimension { expected: self.meta.max_len, actual: out_len });
        }
        let logits: Vec<Vec<f64>> = (0..out_len).map(|i| self.position_logits(x, i)).collect();
        let tokens = logits.iter().map(|l| argmax(l) as u32).collect();
        Ok(SeqOutput { logits, tokens })
    }

    /// Greedy decode, stopping after EOS (included) or at `max_len`.
    pub fn decode_greedy(&self, x: &SparseVec) -> Result<SeqOutput> {
        if self.meta.kind != TaskKind::Seq2seq {
            return Err(Error::InvalidInput("decode on a classification student".into()));
        }
        self.check_dim(x)?;
        let mut out = SeqOutput { logits: Vec::new(), tokens: Vec::new() };
        for i in 0..self.meta.max_len {
            let l = self.position_logits(x, i);
            let tok = argmax(&l) as u32;
            out.logits.push(l);
            out.tokens.push(tok);
            if tok == EOS {
                break;
            }
        }
        Ok(out)
    }

    /// Predicted label (classification) or decoded text (seq2seq).
    pub fn predict(&self, task: &TaskSpec, sample: &Sample) -> Result<String> {
        let x = self.featurize_sample(task, sample);
        match self.meta.kind {
            TaskKind::Classification => {
                let logits = self.forward_classify(&x)?;
                task.labels
                    .get(argmax(&logits))
                    .cloned()
                    .ok_or(Error::Dimension { expected: logits.len(), actual: task.labels.len() })
            }
            TaskKind::Seq2seq => Ok(decode_tokens(&self.decode_greedy(&x)?.tokens)),
        }
    }

    /// Student log-likelihood of its own prediction: the log-probability of
    /// the argmax class, or the mean per-token log-probability of the greedy
    /// decode.
    pub fn prediction_loglik(&self, task: &TaskSpec, sample: &Sample) -> Result<f64> {
        let x = self.featurize_sample(task, sample);
        let rows = match self.meta.kind {
            TaskKind::Classification => vec![self.forward_classify(&x)?],
            TaskKind::Seq2seq => self.decode_greedy(&x)?.logits,
        };
        let total: f64 = rows.iter().map(|l| log_softmax(l)[argmax(l)]).sum();
        Ok(total / rows.len() as f64)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        container::encode(MAGIC, VERSION, &self.meta, &self.weights)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, weights): (ModelMeta, Vec<f64>) = container::decode(MAGIC, VERSION, bytes)?;
        Self::from_parts(meta, weights)
    }

    pub(crate) fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub(crate) fn from_parts(meta: ModelMeta, weights: Vec<f64>) -> Result<Self> {
        meta.features.validate()?;
        let expected = meta.max_len * meta.n_outputs * meta.features.hash_dim;
        if weights.len() != expected {
            return Err(Error::Checkpoint(format!("{} weights, expected {expected}", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Checkpoint("non-finite weight".into()));
        }
        Ok(StudentModel { meta, weights })
    }
}
