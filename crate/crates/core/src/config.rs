//! Run configuration: one JSON document, every field overridable by a
//! dotted key path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feedback::SelectorConfig;
use crate::generation::GeneratorClientConfig;
use crate::simulation::SimTeacherConfig;
use crate::student::{FeatureConfig, SceConfig, TrainConfig, DEFAULT_MAX_LEN};
use crate::types::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Sce,
    Ce,
}

/// Feature settings; `hash_dim: null` picks a size suited to the task kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSettings {
    pub n_gram_orders: Vec<u8>,
    pub hash_dim: Option<usize>,
    pub casefold: bool,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        let d = FeatureConfig::default();
        FeatureSettings { n_gram_orders: d.n_gram_orders, hash_dim: None, casefold: d.casefold }
    }
}

/// Default hash width for seq2seq students, which keep one matrix per
/// output position and would not fit in memory at the classifier width.
pub const SEQ2SEQ_HASH_DIM: usize = 1 << 10;

impl FeatureSettings {
    pub fn resolve(&self, kind: TaskKind) -> FeatureConfig {
        let hash_dim = self.hash_dim.unwrap_or(match kind {
            TaskKind::Classification => FeatureConfig::default().hash_dim,
            TaskKind::Seq2seq => SEQ2SEQ_HASH_DIM,
        });
        FeatureConfig { n_gram_orders: self.n_gram_orders.clone(), hash_dim, casefold: self.casefold }
    }
}

fn default_n_clusters() -> usize {
    8
}

fn default_zipf() -> f64 {
    1.5
}

/// Settings for the simulated world and teacher. When `world_path` is set
/// the world is read from that file and the generative settings here are
/// ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSettings {
    pub world_path: Option<PathBuf>,
    #[serde(default = "default_n_clusters")]
    pub n_clusters: usize,
    #[serde(default = "default_zipf")]
    pub zipf_exponent: f64,
    pub label_noise: f64,
    pub teacher: SimTeacherConfig,
    /// Real samples drawn from the world to seed every prompt.
    pub n_real: usize,
    /// Fail the n-th teacher call (0-based) to exercise fault handling.
    pub inject_fault_at: Option<u64>,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            world_path: None,
            n_clusters: default_n_clusters(),
            zipf_exponent: default_zipf(),
            label_noise: 0.0,
            teacher: SimTeacherConfig::default(),
            n_real: 3,
            inject_fault_at: None,
        }
    }
}

/// Task definition and data files for the HTTP backend.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSettings {
    /// Built-in task name (`anli`, `qnli`, `rte`, `svamp`).
    pub task_preset: Option<String>,
    /// Task definition JSON; takes precedence over `task_preset`.
    pub task_path: Option<PathBuf>,
    /// JSONL real samples placed in every prompt.
    pub real_samples: Option<PathBuf>,
    /// JSONL held-out samples scored after the run.
    pub eval_samples: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n_iterations: u64,
    pub n_train_per_iter: usize,
    pub n_val_per_iter: usize,
    pub m_fb: usize,
    pub band_lo: f64,
    pub band_hi: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub log_zero_clamp: f64,
    pub seed: u64,
    pub generator: GeneratorClientConfig,
    pub feedback_enabled: bool,
    pub loss: LossKind,
    /// Round-robin the label requested from the teacher.
    pub label_rotation: bool,
    /// Also train on `replay_size` samples drawn from the accumulated data.
    pub replay: bool,
    pub replay_size: usize,
    pub features: FeatureSettings,
    pub train: TrainConfig,
    pub max_len: usize,
    /// Persist a checkpoint every this many iterations (0: final only).
    pub checkpoint_every: u64,
    pub simulation: SimulationSettings,
    pub data: DataSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sel = SelectorConfig::default();
        let sce = SceConfig::default();
        RunConfig {
            n_iterations: 375,
            n_train_per_iter: 8,
            n_val_per_iter: 8,
            m_fb: sel.m_fb,
            band_lo: sel.band_lo,
            band_hi: sel.band_hi,
            lambda: sce.lambda,
            sigma: sce.sigma,
            log_zero_clamp: sce.log_zero_clamp,
            seed: 0,
            generator: GeneratorClientConfig::default(),
            feedback_enabled: true,
            loss: LossKind::Sce,
            label_rotation: true,
            replay: false,
            replay_size: 8,
            features: FeatureSettings::default(),
            train: TrainConfig::default(),
            max_len: DEFAULT_MAX_LEN,
            checkpoint_every: 25,
            simulation: SimulationSettings::default(),
            data: DataSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train_per_iter == 0 || self.n_val_per_iter == 0 {
            return Err(Error::InvalidConfig("per-iteration batch sizes must be positive".into()));
        }
        self.selector_config().validate()?;
        self.sce_config().validate()?;
        self.generator.validate()?;
        self.train.validate()?;
        self.simulation.teacher.validate()?;
        self.features.resolve(TaskKind::Classification).validate()?;
        self.features.resolve(TaskKind::Seq2seq).validate()?;
        if self.max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be positive".into()));
        }
        if self.replay && self.replay_size == 0 {
            return Err(Error::InvalidConfig("replay needs replay_size > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.simulation.label_noise) {
            return Err(Error::InvalidConfig("simulation.label_noise must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Total sample budget requested from the teacher for training.
    pub fn budget(&self) -> u64 {
        self.n_iterations * self.n_train_per_iter as u64
    }

    /// Sets `n_iterations` so the run requests exactly `budget` samples.
    pub fn set_budget(&mut self, budget: u64) -> Result<()> {
        let per = self.n_train_per_iter as u64;
        if per == 0 || !budget.is_multiple_of(per) {
            return Err(Error::InvalidConfig(format!("budget {budget} is not a multiple of n_train_per_iter ({per})")));
        }
        self.n_iterations = budget / per;
        Ok(())
    }

    pub fn sce_config(&self) -> SceConfig {
        match self.loss {
            LossKind::Sce => SceConfig { lambda: self.lambda, sigma: self.sigma, log_zero_clamp: self.log_zero_clamp },
            LossKind::Ce => SceConfig::cross_entropy(),
        }
    }

    pub fn selector_config(&self) -> SelectorConfig {
        SelectorConfig { band_lo: self.band_lo, band_hi: self.band_hi, m_fb: self.m_fb }
    }

    /// Applies `key=value` where `key` is a dotted path to an existing field
    /// and `value` is JSON (bare words are taken as strings).
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override `{assignment}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
        let mut doc = serde_json::to_value(&*self)?;
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| Error::InvalidConfig(format!("unknown config key `{key}`")))?;
        }
        *slot = value;
        *self = serde_json::from_value(doc).map_err(|e| Error::InvalidConfig(format!("`{key}`: {e}")))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Digest over the settings that shape a run's trajectory. Settings that
    /// only decide how far or how a run is executed (iteration budget,
    /// checkpoint cadence, concurrency, fault injection, held-out data) are
    /// excluded so a checkpoint can be resumed under them.
    pub fn trajectory_digest(&self) -> String {
        let mut c = self.clone();
        c.n_iterations = 0;
        c.checkpoint_every = 0;
        c.generator.parallelism = 1;
        c.generator.timeout_ms = 1;
        c.generator.max_retries = 0;
        c.generator.backoff_base_ms = 0;
        c.simulation.inject_fault_at = None;
        c.data.eval_samples = None;
        c.digest()
    }
}
