//! A mode-seeking stand-in for the teacher model.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::{CompletionRequest, Generator, PartKind, PromptText, RawCompletion};
use crate::simulation::fingerprint;
use crate::simulation::world::{weighted_index, SimWorld, TEXT_FIELD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimTeacherConfig {
    /// Clusters are drawn proportionally to `prior^mode_exponent`.
    pub mode_exponent: f64,
    /// Added to the weight of every cluster seen in the feedback part.
    pub feedback_boost: f64,
}

impl Default for SimTeacherConfig {
    fn default() -> Self {
        SimTeacherConfig { mode_exponent: 2.0, feedback_boost: 0.5 }
    }
}

impl SimTeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.mode_exponent.is_finite() || self.mode_exponent < 1.0 {
            return Err(Error::InvalidConfig("mode_exponent must be >= 1".into()));
        }
        if !self.feedback_boost.is_finite() || self.feedback_boost < 0.0 {
            return Err(Error::InvalidConfig("feedback_boost must be >= 0".into()));
        }
        Ok(())
    }
}

fn clusters_in(text: Option<&str>) -> BTreeSet<usize> {
    text.map(|t| fingerprint::decode_all(t).into_iter().map(|r| r.cluster).collect()).unwrap_or_default()
}

/// Unnormalized cluster weights the teacher uses for `prompt`.
///
/// Base weight is `p_k^γ`, plus `b` for clusters in the feedback part. When
/// the prompt asks for out-of-distribution content, clusters already shown
/// in the train-examples part get weight zero; if every cluster is shown the
/// request cannot be honoured and the base weights are used.
pub fn teacher_weights(world: &SimWorld, cfg: &SimTeacherConfig, prompt: &PromptText) -> Vec<f64> {
    let boosted = clusters_in(prompt.part(PartKind::FeedbackExamples));
    let mut weights: Vec<f64> = world
        .clusters
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let boost = if boosted.contains(&k) { cfg.feedback_boost } else { 0.0 };
            c.prior.powf(cfg.mode_exponent) + boost
        })
        .collect();
    if prompt.part(PartKind::OodInstruction).is_some() {
        let shown = clusters_in(prompt.part(PartKind::TrainExamples));
        if shown.len() < world.clusters.len() {
            for k in shown {
                if let Some(w) = weights.get_mut(k) {
                    *w = 0.0;
                }
            }
        }
    }
    weights
}

/// One labeled completion in the task's field format. Labels come from the
/// world (with its label noise); a label requested by the prompt is ignored.
pub fn sim_teacher_generate<R: Rng + ?Sized>(
    world: &SimWorld,
    cfg: &SimTeacherConfig,
    prompt: &PromptText,
    rng: &mut R,
) -> String {
    let weights = teacher_weights(world, cfg, prompt);
    let cluster = weighted_index(&weights, rng);
    let realization = world.realize(cluster, rng);
    let label = world.emit_label(cluster, rng);
    format!("{TEXT_FIELD}: {}, Label: {label}", world.render(&realization))
}

/// [`Generator`] backed by the simulated teacher. Each request is answered
/// from its own seed, so results do not depend on scheduling.
#[derive(Debug)]
pub struct SimulatedGenerator {
    world: SimWorld,
    config: SimTeacherConfig,
    parallelism: usize,
    fail_at_call: Option<u64>,
    calls: AtomicU64,
}

impl SimulatedGenerator {
    pub fn new(world: SimWorld, config: SimTeacherConfig) -> Result<Self> {
        world.validate()?;
        config.validate()?;
        Ok(SimulatedGenerator { world, config, parallelism: 1, fail_at_call: None, calls: AtomicU64::new(0) })
    }

    pub fn with_parallelism(mut self, workers: usize) -> Self {
        self.parallelism = workers.max(1);
        self
    }

    /// Makes the `n`-th call (0-based, counted over the generator's lifetime)
    /// fail with a transport error.
    pub fn with_fault_at(mut self, n: Option<u64>) -> Self {
        self.fail_at_call = n;
        self
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn config(&self) -> &SimTeacherConfig {
        &self.config
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Generator for SimulatedGenerator {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawCompletion> {
        let call = self.calls.fetch_add(1, Ordering::Relaxed);
        if self.fail_at_call == Some(call) {
            return Err(Error::Transport { attempts: 1, message: format!("injected fault at call {call}") });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let text = sim_teacher_generate(&self.world, &self.config, request.prompt, &mut rng);
        Ok(RawCompletion { prompt_id: request.prompt_id, text, finish_reason: "stop".into() })
    }

    fn parallelism(&self) -> usize {
        self.parallelism
    }
}
