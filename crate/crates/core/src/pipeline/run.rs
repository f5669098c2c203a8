use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{LossKind, RunConfig};
use crate::dataset::{append_samples, read_batch_file, write_samples};
use crate::error::{Error, Result};
use crate::evaluation::{accuracy, exact_match, lexical_diversity, rouge_l_report, MetricReport};
use crate::generation::{Backend, Generator, HttpGenerator};
use crate::par::{self, Execution};
use crate::pipeline::engine::Pipeline;
use crate::pipeline::state::PipelineState;
use crate::simulation::{SimWorld, SimulatedGenerator};
use crate::student::StudentModel;
use crate::types::{Batch, BatchRole, TaskKind, TaskSpec};

/// RNG stream for draws from the simulated ground truth, kept apart from
/// the pipeline's own stream.
const TRUTH_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
/// Per-cluster size of the balanced test set in simulation reports.
const BALANCED_PER_CLUSTER: usize = 50;

/// Everything a run needs besides its configuration.
pub struct RunSetup {
    pub task: TaskSpec,
    pub x_real: Batch,
    pub eval_set: Option<Batch>,
    pub world: Option<SimWorld>,
    pub generator: Box<dyn Generator>,
}

/// The world a simulated run uses: loaded from `world_path`, or a Zipf world
/// built from the simulation settings and seeded by the run seed.
pub fn sim_world(config: &RunConfig) -> Result<SimWorld> {
    let sim = &config.simulation;
    let world = match &sim.world_path {
        Some(path) => SimWorld::load(path)?,
        None => {
            let mut w = SimWorld::zipf(sim.n_clusters, sim.zipf_exponent, config.seed);
            w.label_noise = sim.label_noise;
            w
        }
    };
    world.validate()?;
    Ok(world)
}

pub fn truth_rng(world: &SimWorld, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(world.seed);
    rng.set_stream(stream);
    rng
}

fn load_task(config: &RunConfig) -> Result<TaskSpec> {
    let task = match (&config.data.task_path, &config.data.task_preset) {
        (Some(path), _) => serde_json::from_reader(fs::File::open(path)?)?,
        (None, Some(name)) => {
            TaskSpec::preset(name).ok_or_else(|| Error::InvalidConfig(format!("unknown task preset `{name}`")))?
        }
        (None, None) => {
            return Err(Error::InvalidConfig("http backend needs data.task_path or data.task_preset".into()))
        }
    };
    task.validate()?;
    Ok(task)
}

/// Builds task, real samples and teacher for `config`. `api_key` is only
/// used by the HTTP backend.
pub fn setup(config: &RunConfig, api_key: Option<String>) -> Result<RunSetup> {
    config.validate()?;
    let eval_set = match &config.data.eval_samples {
        Some(path) => Some(read_batch_file(path, BatchRole::Validation)?),
        None => None,
    };
    match config.generator.backend {
        Backend::Simulated => {
            let world = sim_world(config)?;
            if config.simulation.n_real == 0 {
                return Err(Error::InvalidConfig("simulation.n_real must be positive".into()));
            }
            let x_real = world.sample_truth(config.simulation.n_real, "real-", &mut truth_rng(&world, TRUTH_STREAM));
            let generator = SimulatedGenerator::new(world.clone(), config.simulation.teacher)?
                .with_parallelism(config.generator.parallelism)
                .with_fault_at(config.simulation.inject_fault_at);
            Ok(RunSetup { task: world.task(), x_real, eval_set, world: Some(world), generator: Box::new(generator) })
        }
        Backend::Http => {
            let task = load_task(config)?;
            let path = config
                .data
                .real_samples
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("http backend needs data.real_samples".into()))?;
            let x_real = read_batch_file(path, BatchRole::Train)?;
            let generator = HttpGenerator::new(config.generator.clone(), api_key)?;
            Ok(RunSetup { task, x_real, eval_set, world: None, generator: Box::new(generator) })
        }
    }
}

/// Held-out scores of `student`: accuracy for classification, exact match
/// and ROUGE-L for seq2seq.
pub fn evaluate_student(
    student: &StudentModel,
    task: &TaskSpec,
    eval: &Batch,
    exec: Execution,
) -> Result<Vec<MetricReport>> {
    let preds = par::try_map(exec, eval.samples(), |s| student.predict(task, s))?;
    let refs: Vec<String> = eval.iter().map(|s| s.label.clone()).collect();
    match task.kind {
        TaskKind::Classification => Ok(vec![accuracy(&preds, &refs, Some(task))?]),
        TaskKind::Seq2seq => Ok(vec![exact_match(&preds, &refs)?, rouge_l_report(&preds, &refs)?]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub metric: String,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub tail_threshold: f64,
    /// Share of the generated dataset drawn from tail clusters.
    pub tail_mass: Option<f64>,
    pub truth_tail_mass: f64,
    /// Student accuracy on a test set with every cluster equally represented.
    pub balanced_accuracy: f64,
}

/// Final report. Paths are relative to the run directory so that identical
/// runs in different directories report identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub seed: u64,
    pub backend: Backend,
    pub feedback_enabled: bool,
    pub loss: LossKind,
    pub n_iterations: u64,
    pub requested: u64,
    pub dataset_size: usize,
    pub rejects: BTreeMap<String, usize>,
    pub lexical_diversity: Option<f64>,
    pub dataset: String,
    pub metrics: String,
    pub final_checkpoint: String,
    pub eval: Vec<EvalSummary>,
    pub simulation: Option<SimSummary>,
}

/// On-disk layout of one run.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join("config.snapshot.json")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.jsonl")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint_name(t: u64) -> String {
        format!("checkpoints/iter-{t}.ckpt")
    }

    pub fn checkpoint(&self, t: u64) -> PathBuf {
        self.root.join(Self::checkpoint_name(t))
    }

    /// Checkpoint with the highest iteration number, if any.
    pub fn latest_checkpoint(&self) -> Result<Option<(u64, PathBuf)>> {
        let dir = self.checkpoints();
        if !dir.is_dir() {
            return Ok(None);
        }
        let mut best = None;
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let t = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("iter-"))
                .and_then(|n| n.strip_suffix(".ckpt"))
                .and_then(|n| n.parse::<u64>().ok());
            if let Some(t) = t {
                if best.as_ref().is_none_or(|(b, _)| t > *b) {
                    best = Some((t, path));
                }
            }
        }
        Ok(best)
    }
}

/// Writes through a temporary file so a crash never leaves a torn file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_vec(value)?;
    line.push(b'\n');
    f.write_all(&line)?;
    Ok(())
}

fn write_snapshot(dir: &RunDir, config: &RunConfig) -> Result<()> {
    let mut text = serde_json::to_string_pretty(config)?;
    text.push('\n');
    write_atomic(&dir.config_snapshot(), text.as_bytes())
}

/// Starts a fresh run in `out`, which must not already hold one.
pub fn run(config: &RunConfig, setup: &RunSetup, out: &Path, exec: Execution) -> Result<RunReport> {
    let dir = RunDir::new(out);
    if dir.dataset().exists() || dir.latest_checkpoint()?.is_some() {
        return Err(Error::InvalidInput(format!(
            "{} already holds a run; resume it or pick another directory",
            out.display()
        )));
    }
    let pipeline = Pipeline::new(config, &setup.task, &setup.x_real, setup.generator.as_ref())?.with_execution(exec);
    fs::create_dir_all(dir.checkpoints())?;
    write_snapshot(&dir, config)?;
    fs::write(dir.dataset(), b"")?;
    fs::write(dir.metrics(), b"")?;
    let mut state = pipeline.initial_state()?;
    drive(&pipeline, setup, &dir, &mut state, exec)
}

/// Continues the run in `out` from its latest checkpoint. The checkpoint
/// must come from a config with the same trajectory settings.
pub fn resume(config: &RunConfig, setup: &RunSetup, out: &Path, exec: Execution) -> Result<RunReport> {
    let dir = RunDir::new(out);
    let (_, path) =
        dir.latest_checkpoint()?.ok_or_else(|| Error::Checkpoint(format!("no checkpoint under {}", out.display())))?;
    let (mut state, digest) = PipelineState::restore(&fs::read(&path)?)?;
    if digest != config.trajectory_digest() {
        return Err(Error::Checkpoint(format!("{} was written under a different configuration", path.display())));
    }
    let pipeline = Pipeline::new(config, &setup.task, &setup.x_real, setup.generator.as_ref())?.with_execution(exec);
    if state.t > config.n_iterations {
        return Err(Error::Checkpoint(format!("checkpoint is at t={} beyond n_iterations", state.t)));
    }
    write_snapshot(&dir, config)?;
    // drop anything logged after the checkpoint
    let mut data = Vec::new();
    write_samples(&mut data, &state.dataset)?;
    write_atomic(&dir.dataset(), &data)?;
    let mut log = Vec::new();
    for m in &state.metrics {
        log.extend(serde_json::to_vec(m)?);
        log.push(b'\n');
    }
    write_atomic(&dir.metrics(), &log)?;
    drive(&pipeline, setup, &dir, &mut state, exec)
}

fn drive(
    pipeline: &Pipeline<'_>,
    setup: &RunSetup,
    dir: &RunDir,
    state: &mut PipelineState,
    exec: Execution,
) -> Result<RunReport> {
    let config = pipeline.config();
    let digest = config.trajectory_digest();
    let mut written = state.dataset.len();
    let mut last_ckpt = None;
    pipeline.run_until(state, config.n_iterations, |s, m| {
        append_samples(&dir.dataset(), &s.dataset[written..])?;
        written = s.dataset.len();
        append_line(&dir.metrics(), m)?;
        if config.checkpoint_every > 0 && s.t % config.checkpoint_every == 0 {
            write_atomic(&dir.checkpoint(s.t), &s.checkpoint(&digest)?)?;
            last_ckpt = Some(s.t);
        }
        log::debug!("iteration {} done: {} samples", m.t, s.dataset.len());
        Ok(())
    })?;
    if last_ckpt != Some(state.t) {
        write_atomic(&dir.checkpoint(state.t), &state.checkpoint(&digest)?)?;
    }
    let report = build_report(config, setup, state, exec)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_atomic(&dir.report(), text.as_bytes())?;
    Ok(report)
}

/// Report for a finished state; shared by on-disk runs and in-memory sweeps.
pub fn build_report(config: &RunConfig, setup: &RunSetup, state: &PipelineState, exec: Execution) -> Result<RunReport> {
    let mut rejects = BTreeMap::new();
    for m in &state.metrics {
        for (code, n) in &m.train_rejects {
            *rejects.entry(code.clone()).or_insert(0) += n;
        }
    }
    let eval = match &setup.eval_set {
        Some(batch) if !batch.is_empty() => evaluate_student(&state.student, &setup.task, batch, exec)?
            .into_iter()
            .map(|r| EvalSummary { metric: r.metric, value: r.value, n: r.n })
            .collect(),
        _ => Vec::new(),
    };
    let simulation = match &setup.world {
        Some(world) => Some(sim_summary(world, &setup.task, state, exec)?),
        None => None,
    };
    Ok(RunReport {
        task: setup.task.name.clone(),
        seed: config.seed,
        backend: config.generator.backend,
        feedback_enabled: config.feedback_enabled,
        loss: config.loss,
        n_iterations: state.t,
        requested: state.t * config.n_train_per_iter as u64,
        dataset_size: state.dataset.len(),
        rejects,
        lexical_diversity: lexical_diversity(&state.dataset).ok(),
        dataset: "dataset.jsonl".into(),
        metrics: "metrics.jsonl".into(),
        final_checkpoint: RunDir::checkpoint_name(state.t),
        eval,
        simulation,
    })
}

fn sim_summary(world: &SimWorld, task: &TaskSpec, state: &PipelineState, exec: Execution) -> Result<SimSummary> {
    let threshold = world.tail_threshold;
    let tail_mass = if state.dataset.is_empty() { None } else { Some(world.tail_mass(&state.dataset, threshold)?) };
    let balanced = world.sample_balanced(BALANCED_PER_CLUSTER, "test-", &mut truth_rng(world, TEST_STREAM));
    let balanced_accuracy = evaluate_student(&state.student, task, &balanced, exec)?[0].value;
    Ok(SimSummary {
        tail_threshold: threshold,
        tail_mass,
        truth_tail_mass: world.truth_tail_mass(threshold),
        balanced_accuracy,
    })
}
