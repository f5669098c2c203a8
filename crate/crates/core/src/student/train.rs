use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::student::features::SparseVec;
use crate::student::loss::{sce_loss_grad, SceConfig};
use crate::student::model::{encode_target, StudentModel};
use crate::types::{Sample, TaskKind, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs_per_iter: usize,
    pub minibatch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.1, epochs_per_iter: 1, minibatch: 8, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs_per_iter == 0 || self.minibatch == 0 {
            return Err(Error::InvalidConfig("epochs_per_iter and minibatch must be positive".into()));
        }
        Ok(())
    }
}

enum Target {
    Class(usize),
    Tokens(Vec<u32>),
}

fn target_for(model: &StudentModel, task: &TaskSpec, sample: &Sample) -> Result<Target> {
    match task.kind {
        TaskKind::Classification => {
            let idx = task.label_index(&sample.label).ok_or_else(|| {
                Error::InvalidInput(format!("sample {} has non-canonical label `{}`", sample.id, sample.label))
            })?;
            if idx >= model.n_outputs() {
                return Err(Error::Dimension { expected: model.n_outputs(), actual: idx + 1 });
            }
            Ok(Target::Class(idx))
        }
        TaskKind::Seq2seq => Ok(Target::Tokens(encode_target(&sample.label, model.max_len()))),
    }
}

/// Loss for one sample plus the logit gradients per position.
fn sample_loss_grad(
    model: &StudentModel,
    x: &SparseVec,
    target: &Target,
    sce: &SceConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    match target {
        Target::Class(t) => {
            let logits = model.forward_classify(x)?;
            let (loss, grad) = sce_loss_grad(&logits, *t, sce);
            Ok((loss, vec![grad]))
        }
        Target::Tokens(tokens) => {
            if tokens.is_empty() {
                return Ok((0.0, Vec::new()));
            }
            let out = model.forward_seq(x, tokens.len())?;
            let scale = 1.0 / tokens.len() as f64;
            let mut loss = 0.0;
            let mut grads = Vec::with_capacity(tokens.len());
            for (logits, &t) in out.logits.iter().zip(tokens) {
                let (l, mut g) = sce_loss_grad(logits, t as usize, sce);
                loss += l * scale;
                g.iter_mut().for_each(|v| *v *= scale);
                grads.push(g);
            }
            Ok((loss, grads))
        }
    }
}

/// One pass of plain minibatch gradient descent over `samples` in an order
/// shuffled by `train.seed`. Returns the mean loss, evaluated for each
/// minibatch before its update. The model is left untouched on error.
pub fn train_step(
    model: &mut StudentModel,
    samples: &[Sample],
    task: &TaskSpec,
    sce: &SceConfig,
    train: &TrainConfig,
) -> Result<f64> {
    sce.validate()?;
    train.validate()?;
    if samples.is_empty() {
        return Ok(0.0);
    }
    if task.kind != model.kind() {
        return Err(Error::InvalidInput("student kind does not match task".into()));
    }
    let prepared: Vec<(SparseVec, Target)> = par::try_map(Execution::Parallel, samples, |s| {
        task.validate_sample(s)?;
        Ok::<_, Error>((model.featurize_sample(task, s), target_for(model, task, s)?))
    })?;

    let mut order: Vec<usize> = (0..prepared.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(train.seed));

    let mut work = model.clone();
    let mut total = 0.0;
    for chunk in order.chunks(train.minibatch) {
        let step = train.learning_rate / chunk.len() as f64;
        let mut updates: Vec<(usize, &SparseVec, Vec<Vec<f64>>)> = Vec::with_capacity(chunk.len());
        for &i in chunk {
            let (x, target) = &prepared[i];
            let (loss, grads) = sample_loss_grad(&work, x, target, sce)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss on sample {}", samples[i].id)));
            }
            total += loss;
            updates.push((i, x, grads));
        }
        for (_, x, grads) in &updates {
            for (pos, g) in grads.iter().enumerate() {
                for (k, &gk) in g.iter().enumerate() {
                    if gk == 0.0 {
                        continue;
                    }
                    let off = work.row_offset(pos, k);
                    let w = work.weights_mut();
                    for &(j, v) in x.entries() {
                        w[off + j as usize] -= step * gk * v;
                    }
                }
            }
        }
    }
    let mean = total / prepared.len() as f64;
    if !mean.is_finite() || work.weights().iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("parameters diverged".into()));
    }
    *model = work;
    Ok(mean)
}
