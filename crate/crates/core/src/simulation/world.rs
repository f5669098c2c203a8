//! Ground-truth mixture of schematic text clusters.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulation::fingerprint::{self, Realization};
use crate::types::{Batch, BatchRole, Provenance, Sample, TaskKind, TaskSpec};

pub const TEXT_FIELD: &str = "Text";

/// One cluster: a prior weight, a label and a template of word slots.
/// Slot word `j` is drawn with probability proportional to `noise_decay^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub prior: f64,
    pub label: String,
    pub slots: Vec<Vec<String>>,
    pub noise_decay: f64,
}

impl Cluster {
    fn choice_probs(&self, slot: usize) -> Vec<f64> {
        let n = self.slots[slot].len();
        let raw: Vec<f64> = (0..n).map(|j| self.noise_decay.powi(j as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

fn default_tail_threshold() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorld {
    pub name: String,
    pub labels: Vec<String>,
    pub clusters: Vec<Cluster>,
    /// Probability that an emitted label is replaced by a different one,
    /// chosen uniformly.
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default = "default_tail_threshold")]
    pub tail_threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Zipf priors `p_k ∝ k^-s`, k = 1..=n.
pub fn zipf_priors(n: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Samples an index with probability proportional to `weights`.
pub(crate) fn weighted_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding: fall back to the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

impl SimWorld {
    /// Default world: `n_clusters` Zipf-weighted clusters, each with its
    /// own topical vocabulary plus two slots shared by every cluster.
    pub fn zipf(n_clusters: usize, exponent: f64, seed: u64) -> Self {
        let labels: Vec<String> = ["alpha", "beta", "gamma", "delta"].iter().map(|s| s.to_string()).collect();
        let shared_a: Vec<String> = ["the", "a", "this", "one", "some", "that"].iter().map(|s| s.to_string()).collect();
        let shared_b: Vec<String> =
            ["today", "again", "here", "now", "still", "later"].iter().map(|s| s.to_string()).collect();
        let clusters = zipf_priors(n_clusters, exponent)
            .into_iter()
            .enumerate()
            .map(|(k, prior)| {
                let mut slots = vec![shared_a.clone()];
                for s in 0..4 {
                    slots.push((0..6).map(|j| format!("t{k}s{s}w{j}")).collect());
                }
                slots.push(shared_b.clone());
                Cluster { prior, label: labels[k % labels.len()].clone(), slots, noise_decay: 0.7 }
            })
            .collect();
        SimWorld {
            name: "zipf-world".into(),
            labels,
            clusters,
            label_noise: 0.0,
            tail_threshold: default_tail_threshold(),
            seed,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let world: SimWorld = serde_json::from_reader(std::fs::File::open(path)?)?;
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters.len() < 2 {
            return Err(Error::Simulation("need at least two clusters".into()));
        }
        let total: f64 = self.clusters.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > 1e-9 || self.clusters.iter().any(|c| c.prior.is_nan() || c.prior <= 0.0) {
            return Err(Error::Simulation(format!("priors must be positive and sum to 1 (sum {total})")));
        }
        if !self.clusters.iter().any(|c| c.prior <= self.tail_threshold) {
            return Err(Error::Simulation("no cluster at or below tail_threshold".into()));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(Error::Simulation("label_noise must be in [0, 1]".into()));
        }
        for (k, c) in self.clusters.iter().enumerate() {
            if !self.labels.contains(&c.label) {
                return Err(Error::Simulation(format!("cluster {k} label `{}` not in label set", c.label)));
            }
            if c.slots.is_empty() || c.slots.iter().any(|s| s.is_empty()) {
                return Err(Error::Simulation(format!("cluster {k} has an empty slot")));
            }
            if !(c.noise_decay > 0.0 && c.noise_decay <= 1.0) {
                return Err(Error::Simulation(format!("cluster {k} noise_decay must be in (0, 1]")));
            }
        }
        if self.label_noise > 0.0 && self.labels.len() < 2 {
            return Err(Error::Simulation("label noise needs at least two labels".into()));
        }
        Ok(())
    }

    pub fn priors(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.prior).collect()
    }

    pub fn is_tail(&self, cluster: usize, threshold: f64) -> bool {
        self.clusters[cluster].prior <= threshold
    }

    /// Ground-truth mass of clusters with prior at or below `threshold`.
    pub fn truth_tail_mass(&self, threshold: f64) -> f64 {
        self.clusters.iter().filter(|c| c.prior <= threshold).map(|c| c.prior).sum()
    }

    /// Classification task over the world's single text field.
    pub fn task(&self) -> TaskSpec {
        TaskSpec {
            name: self.name.clone(),
            kind: TaskKind::Classification,
            definition_text: format!(
                "Below are {{n_examples}} samples of the {} dataset. Each sample has a Text and a \
                 Label, one of: {}.",
                self.name,
                self.labels.join(", ")
            ),
            fields: vec![TEXT_FIELD.into()],
            labels: self.labels.clone(),
            ood_instruction: "Write a sample about a topic that none of the listed samples cover.".into(),
            target_name: "Label".into(),
        }
    }

    pub fn realize<R: Rng + ?Sized>(&self, cluster: usize, rng: &mut R) -> Realization {
        let c = &self.clusters[cluster];
        let choices = (0..c.slots.len()).map(|s| weighted_index(&c.choice_probs(s), rng)).collect();
        Realization { cluster, choices }
    }

    /// Words of a realization followed by its fingerprint.
    pub fn render(&self, r: &Realization) -> String {
        let c = &self.clusters[r.cluster];
        let mut text = c.slots.iter().zip(&r.choices).map(|(slot, &j)| slot[j].as_str()).collect::<Vec<_>>().join(" ");
        text.push_str(&fingerprint::encode(r));
        text
    }

    /// The cluster label, replaced by a uniformly chosen other label with
    /// probability `label_noise`.
    pub fn emit_label<R: Rng + ?Sized>(&self, cluster: usize, rng: &mut R) -> String {
        let truth = &self.clusters[cluster].label;
        if self.label_noise > 0.0 && rng.random::<f64>() < self.label_noise {
            let others: Vec<&String> = self.labels.iter().filter(|l| *l != truth).collect();
            return others[rng.random_range(0..others.len())].clone();
        }
        truth.clone()
    }

    fn make_sample(&self, id: String, r: &Realization, label: String) -> Sample {
        Sample {
            id,
            inputs: BTreeMap::from([(TEXT_FIELD.to_string(), self.render(r))]),
            label,
            provenance: Provenance::Real,
            iteration: 0,
        }
    }

    /// `n` samples drawn from the priors, with label noise applied.
    pub fn sample_truth<R: Rng + ?Sized>(&self, n: usize, id_prefix: &str, rng: &mut R) -> Batch {
        let priors = self.priors();
        let samples = (0..n)
            .map(|i| {
                let r = self.realize(weighted_index(&priors, rng), rng);
                let label = self.emit_label(r.cluster, rng);
                self.make_sample(format!("{id_prefix}{i}"), &r, label)
            })
            .collect();
        Batch::new(samples, BatchRole::Validation).expect("ids are distinct")
    }

    /// `per_cluster` clean-labeled samples from every cluster; each cluster is
    /// equally represented regardless of its prior.
    pub fn sample_balanced<R: Rng + ?Sized>(&self, per_cluster: usize, id_prefix: &str, rng: &mut R) -> Batch {
        let mut samples = Vec::with_capacity(per_cluster * self.clusters.len());
        for k in 0..self.clusters.len() {
            for _ in 0..per_cluster {
                let r = self.realize(k, rng);
                let id = format!("{id_prefix}{}", samples.len());
                samples.push(self.make_sample(id, &r, self.clusters[k].label.clone()));
            }
        }
        Batch::new(samples, BatchRole::Validation).expect("ids are distinct")
    }

    pub fn realization_of(&self, sample: &Sample) -> Result<Realization> {
        let r = sample
            .inputs
            .values()
            .find_map(|v| fingerprint::decode_first(v))
            .ok_or_else(|| Error::Simulation(format!("sample {} carries no cluster fingerprint", sample.id)))?;
        let c = self
            .clusters
            .get(r.cluster)
            .ok_or_else(|| Error::Simulation(format!("sample {} names unknown cluster {}", sample.id, r.cluster)))?;
        if r.choices.len() != c.slots.len() || r.choices.iter().zip(&c.slots).any(|(&j, s)| j >= s.len()) {
            return Err(Error::Simulation(format!("sample {} fingerprint does not fit its cluster", sample.id)));
        }
        Ok(r)
    }

    /// `ln p_k + sum_s ln P(choice_s)` for the sample's realization.
    pub fn true_loglik(&self, sample: &Sample) -> Result<f64> {
        let r = self.realization_of(sample)?;
        let c = &self.clusters[r.cluster];
        let noise: f64 = r.choices.iter().enumerate().map(|(s, &j)| c.choice_probs(s)[j].ln()).sum();
        Ok(c.prior.ln() + noise)
    }

    /// Fraction of `dataset` whose source cluster has prior <= `threshold`.
    pub fn tail_mass(&self, dataset: &[Sample], threshold: f64) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::Simulation("tail mass of an empty dataset".into()));
        }
        let mut tail = 0usize;
        for s in dataset {
            if self.is_tail(self.realization_of(s)?.cluster, threshold) {
                tail += 1;
            }
        }
        Ok(tail as f64 / dataset.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_cluster(p_tail: f64) -> SimWorld {
        let cl = |prior: f64, label: &str, word: &str| Cluster {
            prior,
            label: label.into(),
            slots: vec![vec![format!("{word}0"), format!("{word}1")]],
            noise_decay: 0.5,
        };
        SimWorld {
            name: "two".into(),
            labels: vec!["x".into(), "y".into()],
            clusters: vec![cl(1.0 - p_tail, "x", "head"), cl(p_tail, "y", "tail")],
            label_noise: 0.0,
            tail_threshold: p_tail,
            seed: 0,
        }
    }

    #[test]
    fn default_world_is_valid() {
        let w = SimWorld::zipf(8, 1.5, 0);
        w.validate().unwrap();
        assert!((w.priors().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(w.clusters.iter().filter(|c| c.prior <= w.tail_threshold).count(), 4);
        w.task().validate().unwrap();
    }

    #[test]
    fn truth_sampling() {
        let w = two_cluster(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(w.sample_truth(0, "t", &mut rng).is_empty());
        let a = w.sample_truth(50, "t", &mut ChaCha8Rng::seed_from_u64(11));
        let b = w.sample_truth(50, "t", &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        let big = w.sample_truth(10_000, "t", &mut rng);
        // binomial sd = sqrt(0.09/10000) = 0.003; 0.01 is > 3 sd
        let tm = w.tail_mass(big.samples(), 0.1).unwrap();
        assert!((tm - 0.1).abs() < 0.01, "{tm}");
    }

    #[test]
    fn loglik_by_hand() {
        let w = two_cluster(0.1);
        // decay 0.5 over two choices: P = 2/3, 1/3
        let s = w.make_sample("a".into(), &Realization { cluster: 1, choices: vec![1] }, "y".into());
        let expect = 0.1f64.ln() + (1.0f64 / 3.0).ln();
        assert!((w.true_loglik(&s).unwrap() - expect).abs() < 1e-12);
        let head = w.make_sample("b".into(), &Realization { cluster: 0, choices: vec![1] }, "x".into());
        assert!(w.true_loglik(&head).unwrap() > w.true_loglik(&s).unwrap());
        let twin = w.make_sample("c".into(), &Realization { cluster: 1, choices: vec![1] }, "y".into());
        assert_eq!(w.true_loglik(&twin).unwrap(), w.true_loglik(&s).unwrap());
    }

    #[test]
    fn tail_mass_edges() {
        let w = two_cluster(0.1);
        let head = w.make_sample("h".into(), &Realization { cluster: 0, choices: vec![0] }, "x".into());
        let tail = w.make_sample("t".into(), &Realization { cluster: 1, choices: vec![0] }, "y".into());
        assert_eq!(w.tail_mass(&[head.clone(), head.clone()], 0.1).unwrap(), 0.0);
        assert_eq!(w.tail_mass(std::slice::from_ref(&tail), 0.1).unwrap(), 1.0);
        assert!(w.tail_mass(&[], 0.1).is_err());
        let mut plain = head;
        plain.inputs.insert(TEXT_FIELD.into(), "no fingerprint".into());
        assert!(w.true_loglik(&plain).is_err());
    }

    #[test]
    fn truth_tail_mass_matches_mixture() {
        let w = SimWorld::zipf(8, 1.5, 0);
        let expected = w.truth_tail_mass(0.05);
        let big = w.sample_truth(20_000, "t", &mut ChaCha8Rng::seed_from_u64(5));
        let tm = w.tail_mass(big.samples(), 0.05).unwrap();
        let sd = (expected * (1.0 - expected) / 20_000.0).sqrt();
        assert!((tm - expected).abs() < 4.0 * sd, "{tm} vs {expected}");
    }

    #[test]
    fn label_noise_flips_to_other_labels() {
        let mut w = two_cluster(0.1);
        w.label_noise = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(w.emit_label(0, &mut rng), "y");
        }
    }

    #[test]
    fn validation_catches_bad_worlds() {
        let mut w = two_cluster(0.1);
        w.clusters[0].prior = 0.5;
        assert!(w.validate().is_err());
        let mut w = two_cluster(0.1);
        w.tail_threshold = 0.01;
        assert!(w.validate().is_err());
        let mut w = two_cluster(0.1);
        w.clusters[1].label = "z".into();
        assert!(w.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let w = SimWorld::zipf(3, 1.0, 9);
        let text = serde_json::to_string(&w).unwrap();
        let back: SimWorld = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
    }
}
