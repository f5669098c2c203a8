use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kdgen::config::RunConfig;
use kdgen::evaluation::{accuracy, audit_labels, exact_match, export_distribution, lexical_diversity, rouge_l_report};
use kdgen::generation::{Backend, Generator};
use kdgen::par::Execution;
use kdgen::pipeline::{resume, run, setup, sim_world, PipelineState, RunDir, RunReport};
use kdgen::simulation::{summarize, sweep, Arm, SimulatedJudge, SweepSizes};
use kdgen::TaskSpec;

use crate::inputs::{api_key, build_config, classify, read_labels, read_samples};
use crate::{
    usage, AuditArgs, DensityArg, DistillArgs, DiversityArgs, EvaluateArgs, ExportArgs, MetricArg, SimulateArgs,
};

pub fn distill(a: DistillArgs) -> Result<()> {
    let mut config = build_config(&a.config)?;
    if a.no_feedback {
        config.feedback_enabled = false;
    }
    if let Some(loss) = a.loss {
        config.loss = loss.into();
    }
    if a.resume && a.budget.len() > 1 {
        return Err(usage("--resume takes a single run directory, not a budget list"));
    }
    let key = api_key(&config);
    match a.budget.as_slice() {
        [] => distill_one(&config, key, &a.out, a.resume),
        [b] => {
            config.set_budget(*b).map_err(|e| usage(e.to_string()))?;
            distill_one(&config, key, &a.out, a.resume)
        }
        budgets => {
            let mut runs = Vec::with_capacity(budgets.len());
            for &b in budgets {
                let mut c = config.clone();
                c.set_budget(b).map_err(|e| usage(e.to_string()))?;
                runs.push((b, c));
            }
            for (b, c) in runs {
                distill_one(&c, key.clone(), &a.out.join(format!("budget-{b}")), false)?;
            }
            Ok(())
        }
    }
}

fn distill_one(config: &RunConfig, key: Option<String>, out: &Path, resuming: bool) -> Result<()> {
    let s = setup(config, key).map_err(classify)?;
    log::info!(
        "{} run of {} iterations into {}",
        if resuming { "resuming" } else { "starting" },
        config.n_iterations,
        out.display()
    );
    let report =
        if resuming { resume(config, &s, out, Execution::Parallel) } else { run(config, &s, out, Execution::Parallel) }
            .with_context(|| format!("run in {}", out.display()))?;
    print_report(out, &report);
    Ok(())
}

fn print_report(out: &Path, r: &RunReport) {
    println!(
        "{}: kept {} of {} requested samples; report at {}",
        out.display(),
        r.dataset_size,
        r.requested,
        RunDir::new(out).report().display()
    );
    for e in &r.eval {
        println!("  {} {:.4} (n={})", e.metric, e.value, e.n);
    }
    if let Some(d) = r.lexical_diversity {
        println!("  lexical diversity {d:.4}");
    }
    if let Some(sim) = &r.simulation {
        let tail = sim.tail_mass.map_or("n/a".to_string(), |t| format!("{t:.4}"));
        println!(
            "  tail mass {tail} (truth {:.4}), balanced accuracy {:.4}",
            sim.truth_tail_mass, sim.balanced_accuracy
        );
    }
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let config = build_config(&a.config)?;
    if config.generator.backend != Backend::Simulated {
        return Err(usage("simulate runs the simulated backend only"));
    }
    let known = Arm::ablations();
    let arms = a
        .arms
        .iter()
        .map(|name| {
            known.iter().find(|arm| arm.name == *name).cloned().ok_or_else(|| {
                let names: Vec<&str> = known.iter().map(|k| k.name.as_str()).collect();
                usage(format!("unknown arm `{name}`; expected one of {}", names.join(", ")))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if a.seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    let seeds: Vec<u64> = (0..a.seeds).map(|i| config.seed.wrapping_add(i)).collect();
    let exec = if a.sequential { Execution::Sequential } else { Execution::Parallel };
    let sizes = SweepSizes { per_cluster: a.per_cluster, clean_size: a.clean_size };
    let results = sweep(&config, &arms, &seeds, sizes, exec).map_err(classify)?;
    let summary = summarize(&results);

    println!(
        "{:<12} {:>4} {:>10} {:>10} {:>10} {:>10}",
        "arm", "runs", "tail_mass", "balanced", "tail_acc", "clean_acc"
    );
    for s in &summary {
        println!(
            "{:<12} {:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            s.arm, s.runs, s.tail_mass, s.balanced_accuracy, s.tail_accuracy, s.clean_accuracy
        );
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut lines = String::new();
        for r in &results {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        fs::write(dir.join("results.jsonl"), lines)?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let preds = read_labels(&a.preds)?;
    let refs = read_labels(&a.refs)?;
    if preds.len() != refs.len() {
        return Err(usage(format!("{} predictions but {} references", preds.len(), refs.len())));
    }
    let task = match &a.task {
        Some(name) => Some(TaskSpec::preset(name).ok_or_else(|| usage(format!("unknown task preset `{name}`")))?),
        None => None,
    };
    let report = match a.metric {
        MetricArg::Accuracy => accuracy(&preds, &refs, task.as_ref()),
        MetricArg::ExactMatch => exact_match(&preds, &refs),
        MetricArg::RougeL => rouge_l_report(&preds, &refs),
    }?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{} {:.6} (n={})", report.metric, report.value, report.n);
    }
    Ok(())
}

pub fn export_dist(a: ExportArgs) -> Result<()> {
    let dir = RunDir::new(&a.run);
    let snapshot = dir.config_snapshot();
    if !snapshot.is_file() {
        return Err(usage(format!("{} is not a run directory", a.run.display())));
    }
    let config = RunConfig::load(&snapshot)?;
    let samples = read_samples(&a.dataset.clone().unwrap_or_else(|| dir.dataset()))?;
    if a.bins < 2 {
        return Err(usage("--bins must be at least 2"));
    }
    let hist = match a.density {
        DensityArg::Truth => {
            if config.generator.backend != Backend::Simulated {
                return Err(usage("truth density needs a simulated run; use --density student"));
            }
            let world = sim_world(&config)?;
            export_distribution(&samples, |s| world.true_loglik(s), a.bins, Execution::Parallel)?
        }
        DensityArg::Student => {
            let (_, path) = dir.latest_checkpoint()?.context("run has no checkpoint")?;
            let (state, _) = PipelineState::restore(&fs::read(&path)?)?;
            let task = setup(&config, None).map_err(classify)?.task;
            export_distribution(&samples, |s| state.student.prediction_loglik(&task, s), a.bins, Execution::Parallel)?
        }
    };
    let csv = hist.to_csv();
    match &a.out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn diversity(a: DiversityArgs) -> Result<()> {
    for path in &a.datasets {
        let samples = read_samples(path)?;
        let d = lexical_diversity(&samples).with_context(|| path.display().to_string())?;
        println!("{}\t{d:.6}\t{} samples", path.display(), samples.len());
    }
    Ok(())
}

pub fn audit(a: AuditArgs) -> Result<()> {
    let config = build_config(&a.config)?;
    let mut samples = read_samples(&a.dataset)?;
    if let Some(n) = a.limit {
        samples.truncate(n);
    }
    let s = setup(&config, api_key(&config)).map_err(classify)?;
    let sim_judge;
    let judge: &dyn Generator = match &s.world {
        Some(world) => {
            sim_judge = SimulatedJudge::new(world.clone());
            &sim_judge
        }
        None => s.generator.as_ref(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let report = audit_labels(judge, &samples, &s.task, &s.x_real, &mut rng)?;
    let agreement = report.agreement.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "agreement {agreement} (agree {}, disagree {}, unparseable {}, n {})",
        report.agree, report.disagree, report.unparseable, report.n
    );
    if let Some(path) = &a.out {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}
