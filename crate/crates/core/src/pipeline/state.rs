use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::student::model::ModelMeta;
use crate::student::StudentModel;
use crate::types::{Batch, BatchRole, Sample};

const MAGIC: &[u8; 8] = b"KDGCKPT\0";
const VERSION: u32 = 1;

/// Deterministic per-iteration record; no timings, so identical runs log
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub t: u64,
    pub train_requested: usize,
    pub train_accepted: usize,
    pub train_rejects: BTreeMap<String, usize>,
    /// Mean loss over the iteration's training epochs.
    pub train_loss: Option<f64>,
    pub val_requested: usize,
    pub val_accepted: usize,
    pub val_rejects: BTreeMap<String, usize>,
    /// Student error on the validation batch against the teacher's labels,
    /// after this iteration's update.
    pub val_error: Option<f64>,
    /// Min, quartiles and max of the validation scores.
    pub score_quantiles: Option<[f64; 5]>,
    pub band_alpha: Option<f64>,
    pub band_beta: Option<f64>,
    pub feedback_ids: Vec<String>,
    pub dataset_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    /// Completed iterations.
    pub t: u64,
    pub x_fb: Batch,
    pub rng: ChaCha8Rng,
    pub dataset: Vec<Sample>,
    pub student: StudentModel,
    pub metrics: Vec<IterationMetrics>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config_digest: String,
    t: u64,
    x_fb: Vec<Sample>,
    rng: ChaCha8Rng,
    dataset: Vec<Sample>,
    metrics: Vec<IterationMetrics>,
    student: ModelMeta,
}

impl PipelineState {
    /// Self-contained checkpoint tagged with the digest of the config that
    /// produced it.
    pub fn checkpoint(&self, config_digest: &str) -> Result<Vec<u8>> {
        let meta = CheckpointMeta {
            config_digest: config_digest.to_owned(),
            t: self.t,
            x_fb: self.x_fb.samples().to_vec(),
            rng: self.rng.clone(),
            dataset: self.dataset.clone(),
            metrics: self.metrics.clone(),
            student: self.student.meta().clone(),
        };
        container::encode(MAGIC, VERSION, &meta, self.student.weights())
    }

    /// Inverse of [`PipelineState::checkpoint`]; returns the state and the
    /// config digest it was written with.
    pub fn restore(bytes: &[u8]) -> Result<(PipelineState, String)> {
        let (meta, weights): (CheckpointMeta, Vec<f64>) = container::decode(MAGIC, VERSION, bytes)?;
        if meta.metrics.len() as u64 != meta.t {
            return Err(Error::Checkpoint(format!("{} metric records for t={}", meta.metrics.len(), meta.t)));
        }
        let state = PipelineState {
            t: meta.t,
            x_fb: Batch::new(meta.x_fb, BatchRole::Feedback).map_err(|e| Error::Checkpoint(e.to_string()))?,
            rng: meta.rng,
            dataset: meta.dataset,
            student: StudentModel::from_parts(meta.student, weights)?,
            metrics: meta.metrics,
        };
        Ok((state, meta.config_digest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::student::FeatureConfig;
    use crate::types::Provenance;
    use rand::{RngCore, SeedableRng};

    fn state() -> PipelineState {
        let mut student =
            StudentModel::classifier(FeatureConfig { n_gram_orders: vec![1], hash_dim: 8, casefold: true }, 2).unwrap();
        student.weights_mut()[3] = 0.25;
        let s = Sample {
            id: "0-0-0".into(),
            inputs: BTreeMap::from([("Text".to_string(), "hi".to_string())]),
            label: "a".into(),
            provenance: Provenance::Feedback,
            iteration: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        rng.next_u64();
        PipelineState {
            t: 0,
            x_fb: Batch::new(vec![s.clone()], BatchRole::Feedback).unwrap(),
            rng,
            dataset: vec![s],
            student,
            metrics: Vec::new(),
        }
    }

    #[test]
    fn round_trip() {
        let s = state();
        let bytes = s.checkpoint("abc").unwrap();
        let (back, digest) = PipelineState::restore(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(digest, "abc");
        let mut a = back.rng.clone();
        let mut b = s.rng.clone();
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = state().checkpoint("abc").unwrap();
        for i in [0, 9, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[i] ^= 0x40;
            assert!(PipelineState::restore(&bad).is_err(), "byte {i}");
        }
        assert!(PipelineState::restore(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn foreign_container_is_rejected() {
        let model = state().student.to_bytes().unwrap();
        assert!(PipelineState::restore(&model).is_err());
    }
}
