use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::feedback::{score_batch_with, select_feedback, ScoredSample};
use crate::generation::{
    build_train_prompt, build_val_prompt, generate_many, parse_samples, rotated_label, Generator, PromptText,
    Rejection, SampleIds,
};
use crate::par::{self, Execution};
use crate::pipeline::state::{IterationMetrics, PipelineState};
use crate::student::{train_step, FeatureConfig, StudentModel, TrainConfig};
use crate::types::{Batch, BatchRole, Sample, TaskKind, TaskSpec};

fn reject_counts(rejected: &[Rejection]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in rejected {
        *counts.entry(r.reason.code().to_owned()).or_insert(0) += 1;
    }
    counts
}

/// Nearest-rank min, quartiles and max.
fn quantiles(scored: &[ScoredSample]) -> Option<[f64; 5]> {
    let mut v: Vec<f64> = scored.iter().map(|s| s.score.value).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((q * (v.len() - 1) as f64).round()) as usize];
    Some([at(0.0), at(0.25), at(0.5), at(0.75), at(1.0)])
}

/// One configured distillation loop over a task, its real examples and a
/// teacher.
pub struct Pipeline<'a> {
    config: &'a RunConfig,
    task: &'a TaskSpec,
    x_real: &'a Batch,
    generator: &'a dyn Generator,
    features: FeatureConfig,
    exec: Execution,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        config: &'a RunConfig,
        task: &'a TaskSpec,
        x_real: &'a Batch,
        generator: &'a dyn Generator,
    ) -> Result<Self> {
        config.validate()?;
        task.validate()?;
        if x_real.is_empty() {
            return Err(Error::InvalidInput("no real samples for the prompt".into()));
        }
        for s in x_real {
            task.validate_sample(s)?;
        }
        Ok(Pipeline {
            config,
            task,
            x_real,
            generator,
            features: config.features.resolve(task.kind),
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &RunConfig {
        self.config
    }

    pub fn task(&self) -> &TaskSpec {
        self.task
    }

    /// State before the first iteration: fresh student, empty data.
    pub fn initial_state(&self) -> Result<PipelineState> {
        Ok(PipelineState {
            t: 0,
            x_fb: Batch::empty(BatchRole::Feedback),
            rng: ChaCha8Rng::seed_from_u64(self.config.seed),
            dataset: Vec::new(),
            student: StudentModel::for_task(self.task, self.features.clone(), self.config.max_len)?,
            metrics: Vec::new(),
        })
    }

    fn ids(&self, t: u64, ordinal_offset: usize) -> SampleIds {
        SampleIds { seed: self.config.seed, iteration: t, ordinal_offset }
    }

    fn val_error(&self, student: &StudentModel, val: &Batch) -> Result<Option<f64>> {
        if val.is_empty() {
            return Ok(None);
        }
        let wrong = par::try_map(self.exec, val.samples(), |s| {
            let pred = student.predict(self.task, s)?;
            Ok::<_, Error>(match self.task.kind {
                TaskKind::Classification => pred != s.label,
                TaskKind::Seq2seq => {
                    crate::evaluation::normalize_answer(&pred) != crate::evaluation::normalize_answer(&s.label)
                }
            })
        })?;
        Ok(Some(wrong.iter().filter(|&&w| w).count() as f64 / wrong.len() as f64))
    }

    /// Runs iteration `state.t`: generate and parse a train batch, train the
    /// student, then (with feedback enabled) generate a validation batch,
    /// score it and select the next feedback set. The state is only changed
    /// if every stage succeeds.
    pub fn run_iteration(&self, state: &mut PipelineState) -> Result<IterationMetrics> {
        let cfg = self.config;
        let t = state.t;
        if t >= cfg.n_iterations {
            return Err(Error::InvalidInput(format!("run already completed {t} iterations")));
        }
        let mut rng = state.rng.clone();

        let n_train = cfg.n_train_per_iter;
        let prompts = (0..n_train)
            .map(|j| {
                let label = rotated_label(self.task, t * n_train as u64 + j as u64, cfg.label_rotation);
                build_train_prompt(self.task, self.x_real, &state.x_fb, label)
            })
            .collect::<Result<Vec<PromptText>>>()?;
        let raws = generate_many(self.generator, &prompts.iter().collect::<Vec<_>>(), &mut rng)?;
        let train_out = parse_samples(&raws, self.task, self.ids(t, 0), BatchRole::Train);

        let mut train_set: Vec<Sample> = train_out.accepted.samples().to_vec();
        if cfg.replay && !state.dataset.is_empty() {
            let k = cfg.replay_size.min(state.dataset.len());
            let mut picks = rand::seq::index::sample(&mut rng, state.dataset.len(), k).into_vec();
            picks.sort_unstable();
            train_set.extend(picks.into_iter().map(|i| state.dataset[i].clone()));
        }
        let mut student = state.student.clone();
        let sce = cfg.sce_config();
        let mut losses = Vec::with_capacity(cfg.train.epochs_per_iter);
        for _ in 0..cfg.train.epochs_per_iter {
            let train = TrainConfig { seed: rng.next_u64(), ..cfg.train.clone() };
            losses.push(train_step(&mut student, &train_set, self.task, &sce, &train)?);
        }
        let train_loss = (!train_set.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);

        let mut metrics = IterationMetrics {
            t,
            train_requested: n_train,
            train_accepted: train_out.accepted.len(),
            train_rejects: reject_counts(&train_out.rejected),
            train_loss,
            val_requested: 0,
            val_accepted: 0,
            val_rejects: BTreeMap::new(),
            val_error: None,
            score_quantiles: None,
            band_alpha: None,
            band_beta: None,
            feedback_ids: Vec::new(),
            dataset_size: state.dataset.len() + train_out.accepted.len(),
        };

        let mut x_fb = Batch::empty(BatchRole::Feedback);
        if cfg.feedback_enabled && !train_out.accepted.is_empty() {
            let n_val = cfg.n_val_per_iter;
            let prompts = (0..n_val)
                .map(|j| {
                    let label = rotated_label(self.task, t * n_val as u64 + j as u64, cfg.label_rotation);
                    build_val_prompt(self.task, self.x_real, &train_out.accepted, label)
                })
                .collect::<Result<Vec<PromptText>>>()?;
            let raws = generate_many(self.generator, &prompts.iter().collect::<Vec<_>>(), &mut rng)?;
            let val_out = parse_samples(&raws, self.task, self.ids(t, n_train), BatchRole::Validation);
            let scored = score_batch_with(&student, &val_out.accepted, self.task, self.exec)?;
            let selection =
                select_feedback(&scored, &cfg.selector_config(), &mut ChaCha8Rng::seed_from_u64(rng.next_u64()));

            metrics.val_requested = n_val;
            metrics.val_accepted = val_out.accepted.len();
            metrics.val_rejects = reject_counts(&val_out.rejected);
            metrics.val_error = self.val_error(&student, &val_out.accepted)?;
            metrics.score_quantiles = quantiles(&scored);
            metrics.band_alpha = selection.alpha;
            metrics.band_beta = selection.beta;
            metrics.feedback_ids = selection.feedback.iter().map(|s| s.id.clone()).collect();
            x_fb = selection.feedback;
        }

        state.t += 1;
        state.rng = rng;
        state.student = student;
        state.dataset.extend(train_out.accepted.into_samples());
        state.x_fb = x_fb;
        state.metrics.push(metrics.clone());
        Ok(metrics)
    }

    /// Iterates until `state.t == until` (capped at `n_iterations`), calling
    /// `after` once per completed iteration.
    pub fn run_until<F>(&self, state: &mut PipelineState, until: u64, mut after: F) -> Result<()>
    where
        F: FnMut(&PipelineState, &IterationMetrics) -> Result<()>,
    {
        let until = until.min(self.config.n_iterations);
        while state.t < until {
            let m = self.run_iteration(state)?;
            after(state, &m)?;
        }
        Ok(())
    }
}
