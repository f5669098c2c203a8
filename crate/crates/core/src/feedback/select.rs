//! Per-batch rank-band selection of feedback samples.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::energy::{free_energy, sequence_energy, EnergyScore};
use crate::par::{self, Execution};
use crate::student::StudentModel;
use crate::types::{Batch, BatchRole, Provenance, Sample, TaskKind, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample: Sample,
    pub score: EnergyScore,
    /// 0-based position in ascending score order (ties by id).
    pub rank: usize,
    /// `rank / N`.
    pub percentile: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub band_lo: f64,
    pub band_hi: f64,
    pub m_fb: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig { band_lo: 0.2, band_hi: 0.5, m_fb: 3 }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.band_lo && self.band_lo < self.band_hi && self.band_hi <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= band_lo < band_hi <= 1, got [{}, {})",
                self.band_lo, self.band_hi
            )));
        }
        if self.m_fb == 0 {
            return Err(Error::InvalidConfig("m_fb must be >= 1".into()));
        }
        Ok(())
    }

    pub fn in_band(&self, rank: usize, n: usize) -> bool {
        let q = rank as f64 / n as f64;
        self.band_lo <= q && q < self.band_hi
    }
}

fn ascending(a: (&f64, &str), b: (&f64, &str)) -> Ordering {
    a.0.total_cmp(b.0).then_with(|| a.1.cmp(b.1))
}

/// Fills `rank` and `percentile` from the scores; input order is kept.
pub fn assign_ranks(scored: &mut [ScoredSample]) {
    let n = scored.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        ascending((&scored[a].score.value, &scored[a].sample.id), (&scored[b].score.value, &scored[b].sample.id))
    });
    for (rank, i) in order.into_iter().enumerate() {
        scored[i].rank = rank;
        scored[i].percentile = rank as f64 / n as f64;
    }
}

/// Student energy of one sample. Labels are never read.
pub fn score_sample(student: &StudentModel, task: &TaskSpec, sample: &Sample) -> Result<EnergyScore> {
    let x = student.featurize_sample(task, sample);
    match task.kind {
        TaskKind::Classification => free_energy(&student.forward_classify(&x)?),
        TaskKind::Seq2seq => sequence_energy(&student.decode_greedy(&x)?.logits),
    }
}

pub fn score_batch(student: &StudentModel, batch: &Batch, task: &TaskSpec) -> Result<Vec<ScoredSample>> {
    score_batch_with(student, batch, task, Execution::default())
}

pub fn score_batch_with(
    student: &StudentModel,
    batch: &Batch,
    task: &TaskSpec,
    exec: Execution,
) -> Result<Vec<ScoredSample>> {
    if student.kind() != task.kind {
        return Err(Error::InvalidInput("student kind does not match task".into()));
    }
    let mut scored = par::try_map(exec, batch.samples(), |s| {
        Ok::<_, Error>(ScoredSample {
            sample: s.clone(),
            score: score_sample(student, task, s)?,
            rank: 0,
            percentile: 0.0,
        })
    })?;
    assign_ranks(&mut scored);
    Ok(scored)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub feedback: Batch,
    /// Ids of every sample inside the band, in rank order.
    pub band_ids: Vec<String>,
    /// Score at the lowest in-band rank.
    pub alpha: Option<f64>,
    /// Score at the first rank past the band, if any.
    pub beta: Option<f64>,
}

/// Sorts by score (most out-of-distribution first), keeps ranks `i` with
/// `band_lo <= i/N < band_hi`, and draws `m_fb` of them uniformly when the
/// band is larger. Selected samples keep their labels.
pub fn select_feedback<R: Rng + ?Sized>(scored: &[ScoredSample], cfg: &SelectorConfig, rng: &mut R) -> Selection {
    let n = scored.len();
    let mut sorted: Vec<&ScoredSample> = scored.iter().collect();
    sorted.sort_by(|a, b| ascending((&a.score.value, &a.sample.id), (&b.score.value, &b.sample.id)));
    let band: Vec<&ScoredSample> =
        sorted.iter().enumerate().filter(|&(i, _)| cfg.in_band(i, n)).map(|(_, s)| *s).collect();
    let alpha = band.first().map(|s| s.score.value);
    let beta = band.first().and_then(|_| {
        let past = sorted.iter().enumerate().find(|&(i, _)| i as f64 / n as f64 >= cfg.band_hi);
        past.map(|(_, s)| s.score.value)
    });

    let chosen: Vec<&ScoredSample> = if band.len() > cfg.m_fb {
        let mut picks = rand::seq::index::sample(rng, band.len(), cfg.m_fb).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| band[i]).collect()
    } else {
        band.clone()
    };
    let samples = chosen.into_iter().map(|s| Sample { provenance: Provenance::Feedback, ..s.sample.clone() }).collect();
    let feedback = Batch::new(samples, BatchRole::Feedback).unwrap_or_else(|_| Batch::empty(BatchRole::Feedback));
    Selection { feedback, band_ids: band.iter().map(|s| s.sample.id.clone()).collect(), alpha, beta }
}

/// CSV with header `id,score,rank,percentile,selected`, in rank order.
pub fn scores_csv(scored: &[ScoredSample], selected: &Batch) -> String {
    let mut rows: Vec<&ScoredSample> = scored.iter().collect();
    rows.sort_by_key(|s| s.rank);
    let mut out = String::from("id,score,rank,percentile,selected\n");
    for s in rows {
        let picked = selected.iter().any(|f| f.id == s.sample.id);
        let _ = writeln!(out, "{},{},{},{},{}", s.sample.id, s.score.value, s.rank, s.percentile, picked);
    }
    out
}
