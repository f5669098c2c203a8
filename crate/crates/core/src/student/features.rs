//! Hashed n-gram featurization.
//!
//! Text is split on whitespace (after optional lowercasing); every n-gram of
//! a configured order is formed by joining its words with a single space and
//! hashed with 64-bit FNV-1a over its UTF-8 bytes. The bucket is the hash
//! modulo the (power of two) dimension. Counts are L2-normalized.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::words;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub n_gram_orders: Vec<u8>,
    pub hash_dim: usize,
    pub casefold: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { n_gram_orders: vec![1, 2], hash_dim: 1 << 16, casefold: true }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hash_dim < 2 || !self.hash_dim.is_power_of_two() || self.hash_dim > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!("hash_dim {} must be a power of two >= 2", self.hash_dim)));
        }
        if self.n_gram_orders.is_empty() || self.n_gram_orders.iter().any(|o| !(1..=3).contains(o)) {
            return Err(Error::InvalidConfig("n_gram_orders must be a non-empty subset of {1,2,3}".into()));
        }
        Ok(())
    }
}

/// Sparse vector with sorted, distinct indices and non-zero values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn zeros(dim: usize) -> Self {
        SparseVec { dim, entries: Vec::new() }
    }

    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in entries {
            if i as usize >= dim {
                return Err(Error::Dimension { expected: dim, actual: i as usize + 1 });
            }
            *acc.entry(i).or_insert(0.0) += v;
        }
        Ok(SparseVec { dim, entries: acc.into_iter().filter(|&(_, v)| v != 0.0).collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// Dot product with a dense row of length `dim`.
    pub fn dot(&self, row: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| row[i as usize] * v).sum()
    }
}

pub fn featurize(text: &str, cfg: &FeatureConfig) -> SparseVec {
    let tokens = words(text, cfg.casefold);
    let mask = (cfg.hash_dim - 1) as u64;
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for &order in &cfg.n_gram_orders {
        let n = order as usize;
        if tokens.len() < n {
            continue;
        }
        for gram in tokens.windows(n) {
            let key = gram.join(" ");
            let bucket = (fnv1a64(key.as_bytes()) & mask) as u32;
            *counts.entry(bucket).or_insert(0.0) += 1.0;
        }
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    let entries = counts.into_iter().map(|(i, c)| (i, c / norm)).collect();
    SparseVec { dim: cfg.hash_dim, entries }
}
