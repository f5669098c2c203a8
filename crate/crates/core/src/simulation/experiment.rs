//! Ablation sweeps over the simulated world, run in memory.

use serde::{Deserialize, Serialize};

use crate::config::{LossKind, RunConfig};
use crate::error::Result;
use crate::generation::Backend;
use crate::par::{self, Execution};
use crate::pipeline::run::{evaluate_student, setup, sim_world, truth_rng};
use crate::pipeline::Pipeline;
use crate::simulation::SimWorld;
use crate::types::{Batch, BatchRole};

const BALANCED_STREAM: u64 = 2;
const CLEAN_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub feedback: bool,
    pub loss: LossKind,
}

impl Arm {
    pub fn new(name: &str, feedback: bool, loss: LossKind) -> Self {
        Arm { name: name.into(), feedback, loss }
    }

    /// Full method plus the three feedback/loss ablations.
    pub fn ablations() -> Vec<Arm> {
        vec![
            Arm::new("full", true, LossKind::Sce),
            Arm::new("no_feedback", false, LossKind::Sce),
            Arm::new("no_sce", true, LossKind::Ce),
            Arm::new("vanilla", false, LossKind::Ce),
        ]
    }
}

/// Test sets for one world: every cluster equally represented, its tail
/// clusters alone, and a prior-distributed set with clean labels.
#[derive(Debug, Clone)]
pub struct TestSets {
    pub balanced: Batch,
    pub tail: Batch,
    pub clean: Batch,
}

impl TestSets {
    pub fn new(world: &SimWorld, per_cluster: usize, clean_size: usize) -> Result<Self> {
        let balanced = world.sample_balanced(per_cluster, "bal-", &mut truth_rng(world, BALANCED_STREAM));
        let tail_samples = balanced
            .iter()
            .filter(|s| world.realization_of(s).is_ok_and(|r| world.is_tail(r.cluster, world.tail_threshold)))
            .cloned()
            .collect();
        let tail = Batch::new(tail_samples, BatchRole::Validation)?;
        let clean_world = SimWorld { label_noise: 0.0, ..world.clone() };
        let clean = clean_world.sample_truth(clean_size, "clean-", &mut truth_rng(world, CLEAN_STREAM));
        Ok(TestSets { balanced, tail, clean })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub seed: u64,
    pub dataset_size: usize,
    pub tail_mass: f64,
    pub balanced_accuracy: f64,
    pub tail_accuracy: f64,
    pub clean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub runs: usize,
    pub tail_mass: f64,
    pub balanced_accuracy: f64,
    pub tail_accuracy: f64,
    pub clean_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSizes {
    pub per_cluster: usize,
    pub clean_size: usize,
}

impl Default for SweepSizes {
    fn default() -> Self {
        SweepSizes { per_cluster: 100, clean_size: 1000 }
    }
}

/// One simulated run of `arm` at `seed`, entirely in memory.
pub fn run_arm(base: &RunConfig, arm: &Arm, seed: u64, sizes: SweepSizes) -> Result<ArmResult> {
    let mut config = base.clone();
    config.seed = seed;
    config.feedback_enabled = arm.feedback;
    config.loss = arm.loss;
    config.generator.backend = Backend::Simulated;
    config.generator.parallelism = 1;
    let s = setup(&config, None)?;
    let world = s.world.clone().unwrap_or(sim_world(&config)?);
    let pipeline =
        Pipeline::new(&config, &s.task, &s.x_real, s.generator.as_ref())?.with_execution(Execution::Sequential);
    let mut state = pipeline.initial_state()?;
    pipeline.run_until(&mut state, config.n_iterations, |_, _| Ok(()))?;

    let tests = TestSets::new(&world, sizes.per_cluster, sizes.clean_size)?;
    let acc = |b: &Batch| -> Result<f64> {
        Ok(evaluate_student(&state.student, &s.task, b, Execution::Sequential)?[0].value)
    };
    let tail_mass =
        if state.dataset.is_empty() { 0.0 } else { world.tail_mass(&state.dataset, world.tail_threshold)? };
    Ok(ArmResult {
        arm: arm.name.clone(),
        seed,
        dataset_size: state.dataset.len(),
        tail_mass,
        balanced_accuracy: acc(&tests.balanced)?,
        tail_accuracy: acc(&tests.tail)?,
        clean_accuracy: acc(&tests.clean)?,
    })
}

/// Every arm at every seed; runs are independent and may execute in
/// parallel. Results come back in (arm, seed) order either way.
pub fn sweep(
    base: &RunConfig,
    arms: &[Arm],
    seeds: &[u64],
    sizes: SweepSizes,
    exec: Execution,
) -> Result<Vec<ArmResult>> {
    let jobs: Vec<(&Arm, u64)> = arms.iter().flat_map(|a| seeds.iter().map(move |&s| (a, s))).collect();
    par::try_map(exec, &jobs, |(arm, seed)| run_arm(base, arm, *seed, sizes))
}

/// Per-arm means, in order of first appearance.
pub fn summarize(results: &[ArmResult]) -> Vec<ArmSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in results {
        if !names.contains(&r.arm.as_str()) {
            names.push(&r.arm);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let rows: Vec<&ArmResult> = results.iter().filter(|r| r.arm == name).collect();
            let mean = |f: fn(&ArmResult) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64;
            ArmSummary {
                arm: name.to_owned(),
                runs: rows.len(),
                tail_mass: mean(|r| r.tail_mass),
                balanced_accuracy: mean(|r| r.balanced_accuracy),
                tail_accuracy: mean(|r| r.tail_accuracy),
                clean_accuracy: mean(|r| r.clean_accuracy),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> RunConfig {
        let mut c = RunConfig { n_iterations: 5, ..RunConfig::default() };
        c.features.hash_dim = Some(1 << 10);
        c
    }

    #[test]
    fn sweep_order_and_modes_agree() {
        let arms = vec![Arm::new("a", true, LossKind::Sce), Arm::new("b", false, LossKind::Ce)];
        let sizes = SweepSizes { per_cluster: 5, clean_size: 20 };
        let par = sweep(&quick(), &arms, &[1, 2], sizes, Execution::Parallel).unwrap();
        let seq = sweep(&quick(), &arms, &[1, 2], sizes, Execution::Sequential).unwrap();
        assert_eq!(par, seq);
        let order: Vec<(&str, u64)> = par.iter().map(|r| (r.arm.as_str(), r.seed)).collect();
        assert_eq!(order, vec![("a", 1), ("a", 2), ("b", 1), ("b", 2)]);
        let summary = summarize(&par);
        assert_eq!(summary.len(), 2);
        assert_eq!(summary[0].runs, 2);
    }

    #[test]
    fn test_sets() {
        let world = SimWorld::zipf(8, 1.5, 0);
        let t = TestSets::new(&world, 10, 50).unwrap();
        assert_eq!(t.balanced.len(), 80);
        assert_eq!(t.tail.len(), 40);
        assert_eq!(t.clean.len(), 50);
    }
}
