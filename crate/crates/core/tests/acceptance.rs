//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::str::FromStr;
use std::time::{Duration, Instant};

use astro_float::{BigFloat, Consts, RoundingMode};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{prompt_of, Reply, StubServer};
use kdgen::config::{LossKind, RunConfig};
use kdgen::evaluation::{accuracy, exact_match, lexical_diversity, rouge_l, Histogram};
use kdgen::feedback::{free_energy, select_feedback, sequence_energy, EnergyScore, ScoredSample, SelectorConfig};
use kdgen::generation::{generate_many, Backend, GeneratorClientConfig, HttpGenerator, PartKind, PromptText};
use kdgen::par::Execution;
use kdgen::pipeline::{run, setup, Pipeline, PipelineState, RunDir};
use kdgen::simulation::{summarize, sweep, Arm, ArmResult, SweepSizes};
use kdgen::student::{sce_loss_grad, SceConfig};
use kdgen::{Provenance, Sample};

/// Tail-mass ratio (feedback / no feedback) observed in the calibration
/// run of the default world over seeds 0..5.
const PINNED_TAIL_RATIO: f64 = 9.83;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- energy

const PREC: usize = 256;

/// `ln sum exp` by direct summation at 256-bit precision, no shifting.
fn oracle_lse(logits: &[f64], cc: &mut Consts) -> BigFloat {
    let rm = RoundingMode::ToEven;
    let mut sum = BigFloat::from_f64(0.0, PREC);
    for &z in logits {
        sum = sum.add(&BigFloat::from_f64(z, PREC).exp(PREC, rm, cc), PREC, rm);
    }
    sum.ln(PREC, rm, cc)
}

fn to_f64(x: &BigFloat) -> f64 {
    f64::from_str(&x.to_string()).expect("decimal big float")
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

fn criterion_energy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut cc = Consts::new().expect("constants");
    let rm = RoundingMode::ToEven;
    let mut inputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(1000);
    for i in 0..1000 {
        let (rows, width) = if i % 2 == 0 {
            (1, rng.random_range(1..=64))
        } else {
            (rng.random_range(1..=32), rng.random_range(1..=64))
        };
        let scale = [1.0, 10.0, 300.0][i % 3];
        inputs.push((0..rows).map(|_| (0..width).map(|_| rng.random_range(-scale..scale)).collect()).collect());
    }

    let started = Instant::now();
    let got: Vec<f64> = inputs
        .iter()
        .enumerate()
        .map(|(i, rows)| if i % 2 == 0 { free_energy(&rows[0]) } else { sequence_energy(rows) }.unwrap().value)
        .collect();
    let impl_time = started.elapsed();

    let mut worst = 0.0f64;
    for (rows, &g) in inputs.iter().zip(&got) {
        let mut total = BigFloat::from_f64(0.0, PREC);
        for row in rows {
            total = total.add(&oracle_lse(row, &mut cc), PREC, rm);
        }
        let want = to_f64(&total.div(&BigFloat::from_f64(rows.len() as f64, PREC), PREC, rm));
        worst = worst.max(rel_err(g, want));
    }

    let mut worst_shift = 0.0f64;
    for rows in inputs.iter().step_by(2) {
        let c = rng.random_range(-50.0..50.0);
        let shifted: Vec<f64> = rows[0].iter().map(|z| z + c).collect();
        let base = free_energy(&rows[0]).unwrap().value;
        let moved = free_energy(&shifted).unwrap().value;
        // exact identity up to the rounding of the shifted inputs themselves
        let slack = rows[0].iter().map(|z| (z + c - z - c).abs()).fold(0.0, f64::max);
        worst_shift = worst_shift.max(((moved - base - c).abs() - slack).max(0.0));
    }

    let pass = worst <= 1e-9 && worst_shift <= 1e-12 && impl_time < Duration::from_secs(1);
    outcome(pass, format!("max rel err {worst:.2e}, shift err {worst_shift:.2e}, 1000 inputs in {impl_time:.2?}"))
}

// ------------------------------------------------------------- selection

fn scored(id: String, value: f64) -> ScoredSample {
    ScoredSample {
        sample: Sample {
            id,
            inputs: BTreeMap::new(),
            label: "x".into(),
            provenance: Provenance::Generated,
            iteration: 0,
        },
        score: EnergyScore { value, per_token: None },
        rank: 0,
        percentile: 0.0,
    }
}

/// Band by exact rational comparison `1/5 <= r/N < 1/2`, ranks by counting
/// predecessors.
fn brute_band(list: &[ScoredSample]) -> Vec<String> {
    let n = list.len();
    let mut band: Vec<(usize, String)> = Vec::new();
    for s in list {
        let rank = list
            .iter()
            .filter(|o| o.score.value < s.score.value || (o.score.value == s.score.value && o.sample.id < s.sample.id))
            .count();
        if 5 * rank >= n && 2 * rank < n {
            band.push((rank, s.sample.id.clone()));
        }
    }
    band.sort();
    band.into_iter().map(|(_, id)| id).collect()
}

fn criterion_selection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = SelectorConfig::default();
    let started = Instant::now();
    let mut mismatches = 0;
    for case in 0..500 {
        let n = rng.random_range(1..=200);
        let tied = case % 4 == 0;
        let mut ids: Vec<u32> = (0..n as u32).collect();
        for i in (1..ids.len()).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let list: Vec<ScoredSample> = ids
            .iter()
            .map(|&id| {
                let v = if tied { rng.random_range(0..4) as f64 } else { rng.random_range(-10.0..10.0) };
                scored(format!("s{id:03}"), v)
            })
            .collect();
        let band = brute_band(&list);
        let seed = rng.next_u64();
        let expected: Vec<String> = if band.len() > cfg.m_fb {
            let mut picks =
                rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), band.len(), cfg.m_fb).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| band[i].clone()).collect()
        } else {
            band.clone()
        };
        let sel = select_feedback(&list, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let got: Vec<String> = sel.feedback.iter().map(|s| s.id.clone()).collect();
        if got != expected || sel.band_ids != band {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(1),
        format!("{mismatches}/500 mismatches in {elapsed:.2?}"),
    )
}

// ------------------------------------------------------------------- SCE

/// Loss written out independently: `λ·(-A)(1-p_t) + σ·(-ln p_t)`.
fn oracle_sce(z: &[f64], t: usize, lambda: f64, sigma: f64, a: f64) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = z.iter().map(|v| (v - m).exp()).sum();
    let pt = (z[t] - m).exp() / denom;
    lambda * (-a) * (1.0 - pt) + sigma * -((z[t] - m) - denom.ln())
}

fn criterion_sce() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let started = Instant::now();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut exact = true;
    for _ in 0..100 {
        let c = rng.random_range(2..=10);
        let z: Vec<f64> = (0..c).map(|_| rng.random_range(-4.0..4.0)).collect();
        let t = rng.random_range(0..c);
        let (lambda, sigma) = (rng.random_range(0.0..2.0), rng.random_range(0.01..2.0));
        let a = -rng.random_range(1.0..8.0);
        let cfg = SceConfig { lambda, sigma, log_zero_clamp: a };
        let (_, grad) = sce_loss_grad(&z, t, &cfg);
        let fd: Vec<f64> = (0..c)
            .map(|j| {
                let mut up = z.clone();
                let mut down = z.clone();
                up[j] += h;
                down[j] -= h;
                (oracle_sce(&up, t, lambda, sigma, a) - oracle_sce(&down, t, lambda, sigma, a)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = grad.iter().zip(&fd).map(|(g, f)| (g - f).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / norm);

        // one weight at zero leaves exactly the other term
        let rce_only = sce_loss_grad(&z, t, &SceConfig { lambda: 1.0, sigma: 0.0, log_zero_clamp: a });
        let ce_only = sce_loss_grad(&z, t, &SceConfig { lambda: 0.0, sigma: 1.0, log_zero_clamp: a });
        let no_ce = sce_loss_grad(&z, t, &SceConfig { lambda, sigma: 0.0, log_zero_clamp: a });
        let no_rce = sce_loss_grad(&z, t, &SceConfig { lambda: 0.0, sigma, log_zero_clamp: a });
        exact &= no_ce.1.iter().zip(&rce_only.1).all(|(g, r)| *g == lambda * r);
        exact &= no_rce.1.iter().zip(&ce_only.1).all(|(g, r)| *g == sigma * r);
        exact &= no_ce.0 == lambda * rce_only.0 && no_rce.0 == sigma * ce_only.0;
    }
    let elapsed = started.elapsed();
    let pass = worst <= 1e-5 && exact && elapsed < Duration::from_secs(5);
    outcome(pass, format!("max rel err {worst:.2e}, degenerations exact: {exact}, {elapsed:.2?}"))
}

// ---------------------------------------------------------- determinism

fn full_run_config(seed: u64) -> RunConfig {
    RunConfig { seed, ..RunConfig::default() }
}

fn criterion_determinism() -> Outcome {
    let started = Instant::now();
    let cfg = full_run_config(7);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut reports = Vec::new();
    for d in &dirs {
        reports.push(run(&cfg, &setup(&cfg, None).unwrap(), d.path(), Execution::Parallel).unwrap());
    }
    let read = |d: &tempfile::TempDir, f: &dyn Fn(&RunDir) -> std::path::PathBuf| {
        std::fs::read(f(&RunDir::new(d.path()))).unwrap()
    };
    let same_data = read(&dirs[0], &|r| r.dataset()) == read(&dirs[1], &|r| r.dataset());
    let same_ckpt = read(&dirs[0], &|r| r.checkpoint(375)) == read(&dirs[1], &|r| r.checkpoint(375));
    let same_report = read(&dirs[0], &|r| r.report()) == read(&dirs[1], &|r| r.report());
    let size = reports[0].dataset_size;
    let elapsed = started.elapsed();
    let pass = same_data && same_ckpt && same_report && elapsed <= Duration::from_secs(120);
    outcome(
        pass,
        format!("dataset identical: {same_data}, checkpoint identical: {same_ckpt}, {size} samples, {elapsed:.2?}"),
    )
}

// ------------------------------------------------------ simulation arms

fn mean_of(results: &[ArmResult], arm: &str, f: fn(&ArmResult) -> f64) -> f64 {
    let rows: Vec<f64> = results.iter().filter(|r| r.arm == arm).map(f).collect();
    rows.iter().sum::<f64>() / rows.len() as f64
}

fn feedback_sweep() -> (Vec<ArmResult>, Duration) {
    let started = Instant::now();
    let arms = [Arm::new("feedback", true, LossKind::Sce), Arm::new("no_feedback", false, LossKind::Sce)];
    let results = sweep(&RunConfig::default(), &arms, &SEEDS, SweepSizes::default(), Execution::Parallel).unwrap();
    (results, started.elapsed())
}

fn criterion_tail(results: &[ArmResult], elapsed: Duration) -> Outcome {
    let gold = mean_of(results, "feedback", |r| r.tail_mass);
    let vanilla = mean_of(results, "no_feedback", |r| r.tail_mass);
    let ratio = gold / vanilla;
    let pinned_ok = (ratio - PINNED_TAIL_RATIO).abs() <= 0.2 * PINNED_TAIL_RATIO;
    let pass = ratio >= 2.0 && pinned_ok && elapsed <= Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "tail mass {gold:.4} vs {vanilla:.4}, ratio {ratio:.2} (pinned {PINNED_TAIL_RATIO} ±20%), {elapsed:.2?}"
        ),
    )
}

fn criterion_feedback_accuracy(results: &[ArmResult], elapsed: Duration) -> Outcome {
    let diffs: Vec<f64> = SEEDS
        .iter()
        .map(|&s| {
            let pick = |arm: &str| results.iter().find(|r| r.arm == arm && r.seed == s).unwrap().tail_accuracy;
            pick("feedback") - pick("no_feedback")
        })
        .collect();
    let mean_diff = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let wins = diffs.iter().filter(|&&d| d > 0.0).count();
    let with = mean_of(results, "feedback", |r| r.tail_accuracy);
    let without = mean_of(results, "no_feedback", |r| r.tail_accuracy);
    let pass = mean_diff > 0.0 && elapsed <= Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "tail-test accuracy {with:.4} vs {without:.4}, paired mean diff {mean_diff:+.4}, {wins}/5 seeds better"
        ),
    )
}

fn criterion_sce_noise() -> Outcome {
    let started = Instant::now();
    let mut base = RunConfig::default();
    base.simulation.label_noise = 0.2;
    let arms = [Arm::new("sce", true, LossKind::Sce), Arm::new("ce", true, LossKind::Ce)];
    let results = sweep(&base, &arms, &SEEDS, SweepSizes::default(), Execution::Parallel).unwrap();
    let s = summarize(&results);
    let (sce, ce) = (s[0].clean_accuracy, s[1].clean_accuracy);
    let elapsed = started.elapsed();
    outcome(
        sce >= ce && elapsed <= Duration::from_secs(600),
        format!("clean-test accuracy sce {sce:.4} vs ce {ce:.4} at 20% label noise, {elapsed:.2?}"),
    )
}

// --------------------------------------------------------------- metrics

fn criterion_metrics() -> Outcome {
    let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let sample = |text: &str| Sample {
        id: text.into(),
        inputs: BTreeMap::from([("Text".to_string(), text.to_string())]),
        label: String::new(),
        provenance: Provenance::Generated,
        iteration: 0,
    };
    let labels = v(&["a", "b", "a", "b"]);
    let mut checks: Vec<(&str, bool)> = vec![
        ("accuracy identical", accuracy(&labels, &labels, None).unwrap().value == 1.0),
        ("accuracy disjoint", accuracy(&v(&["a", "a"]), &v(&["b", "b"]), None).unwrap().value == 0.0),
        ("accuracy 3 of 4", accuracy(&v(&["a", "b", "a", "a"]), &labels, None).unwrap().value == 0.75),
        ("em case/space", exact_match(&v(&["Paris "]), &v(&["paris"])).unwrap().value == 1.0),
        ("em mismatch", exact_match(&v(&["Paris"]), &v(&["France"])).unwrap().value == 0.0),
        ("em empty", exact_match(&v(&[""]), &v(&[""])).unwrap().value == 1.0),
        ("rouge identical", rouge_l("a b c", "a b c").unwrap() == 1.0),
        ("rouge lcs", (rouge_l("a b c", "a c").unwrap() - 0.8).abs() <= 1e-15),
        ("rouge disjoint", rouge_l("x y", "a b").unwrap() == 0.0),
        ("diversity a a b", lexical_diversity(&[sample("a a b")]).unwrap() == 2.0 / 3.0),
        ("diversity distinct", lexical_diversity(&[sample("a b c")]).unwrap() == 1.0),
        ("diversity casefold", lexical_diversity(&[sample("The the cat")]).unwrap() == 2.0 / 3.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut sums_ok = true;
    for _ in 0..200 {
        let n = rng.random_range(1..300);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..5.0)).collect();
        let h = Histogram::from_values(&values, rng.random_range(2..50)).unwrap();
        let total: f64 = h.bins.iter().map(|b| b.fraction).sum();
        sums_ok &= (total - 1.0).abs() <= 1e-12 && h.bins.iter().map(|b| b.count).sum::<usize>() == n;
    }
    checks.push(("histogram sums", sums_ok));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(failed.is_empty(), format!("{}/{} checks, failed: {failed:?}", checks.len() - failed.len(), checks.len()))
}

// ---------------------------------------------------------------- resume

fn criterion_resume() -> Outcome {
    let started = Instant::now();
    let cfg = full_run_config(11);
    let s = setup(&cfg, None).unwrap();
    let pipeline = Pipeline::new(&cfg, &s.task, &s.x_real, s.generator.as_ref()).unwrap();

    let mut straight = pipeline.initial_state().unwrap();
    pipeline.run_until(&mut straight, 375, |_, _| Ok(())).unwrap();

    let mut first = pipeline.initial_state().unwrap();
    pipeline.run_until(&mut first, 100, |_, _| Ok(())).unwrap();
    let bytes = first.checkpoint(&cfg.trajectory_digest()).unwrap();
    drop(first);
    let (mut resumed, _) = PipelineState::restore(&bytes).unwrap();
    let t_restored = resumed.t;
    pipeline.run_until(&mut resumed, 375, |_, _| Ok(())).unwrap();

    let same_data = resumed.dataset == straight.dataset;
    let same_weights = resumed.student.weights() == straight.student.weights();
    let same_state = resumed == straight;
    let elapsed = started.elapsed();
    outcome(
        same_data && same_weights && same_state && t_restored == 100,
        format!("restored at t={t_restored}; dataset identical: {same_data}, weights identical: {same_weights}, {elapsed:.2?}"),
    )
}

// ------------------------------------------------------------------ HTTP

fn criterion_http() -> Outcome {
    let failing = ["prompt 2\n", "prompt 5\n"];
    let server = StubServer::start(move |body, seen| {
        let prompt = prompt_of(body).to_owned();
        if failing.contains(&prompt.as_str()) && seen == 0 {
            return Reply::status(503);
        }
        let i: u64 = prompt.trim().trim_start_matches("prompt ").parse().unwrap_or(0);
        // later prompts answer sooner so completion order differs from request order
        Reply::ok_content(&format!("answer to {}", prompt.trim())).after(Duration::from_millis((8 - i % 8) * 15))
    });
    let config = GeneratorClientConfig {
        backend: Backend::Http,
        endpoint_url: server.url.clone(),
        model_name: "stub-teacher".into(),
        backoff_base_ms: 40,
        parallelism: 4,
        ..GeneratorClientConfig::default()
    };
    let client = HttpGenerator::new(config, Some("test-key".into())).unwrap();
    let prompts: Vec<PromptText> =
        (0..8).map(|i| PromptText::new(vec![(PartKind::TaskDef, format!("prompt {i}\n"))]).unwrap()).collect();
    let refs: Vec<&PromptText> = prompts.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seeds: Vec<u64> = {
        let mut r = rng.clone();
        (0..8).map(|_| r.next_u64()).collect()
    };
    let out = generate_many(&client, &refs, &mut rng).unwrap();
    let log = server.requests();

    let ordered = out.iter().enumerate().all(|(i, c)| c.prompt_id == i && c.text == format!("answer to prompt {i}"));
    let ok: Vec<_> = log.iter().filter(|r| r.status == 200).collect();
    let one_per_sample = ok.len() == 8 && log.len() == 10;
    let bodies_ok = ok.iter().all(|r| {
        let b = &r.body;
        let i: usize = prompt_of(b).trim().trim_start_matches("prompt ").parse().unwrap_or(99);
        b["model"] == "stub-teacher"
            && b["temperature"] == 1.0
            && b["max_tokens"] == 512
            && b["messages"].as_array().is_some_and(|m| m.len() == 1)
            && b["messages"][0]["role"] == "user"
            && i < 8
            && b["seed"] == seeds[i]
            && r.authorization.as_deref() == Some("Bearer test-key")
    });
    let backoff_ok = failing.iter().all(|p| {
        let times: Vec<Instant> = log.iter().filter(|r| prompt_of(&r.body) == *p).map(|r| r.at).collect();
        times.len() == 2 && times[1].duration_since(times[0]) >= Duration::from_millis(40)
    });
    outcome(
        ordered && one_per_sample && bodies_ok && backoff_ok,
        format!(
            "order kept: {ordered}, {} requests for 8 samples with 2 injected 503s, body fields ok: {bodies_ok}, backoff ok: {backoff_ok}",
            log.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} {:<28} {}  {}", name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    record(1, "energy correctness", criterion_energy());
    record(2, "selection band", criterion_selection());
    record(3, "sce gradients", criterion_sce());
    record(4, "determinism", criterion_determinism());
    let (sweep_results, sweep_time) = feedback_sweep();
    record(5, "tail restoration", criterion_tail(&sweep_results, sweep_time));
    record(6, "feedback ablation", criterion_feedback_accuracy(&sweep_results, sweep_time));
    record(7, "sce ablation under noise", criterion_sce_noise());
    record(8, "metrics", criterion_metrics());
    record(9, "pipeline resumability", criterion_resume());
    record(10, "http conformance", criterion_http());

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
