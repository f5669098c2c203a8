use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::types::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub n: usize,
    pub bins: Vec<Bin>,
}

impl Histogram {
    /// Equal-width bins over the observed range; the last bin is closed.
    /// A zero-width range collapses to a single bin.
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidInput("need at least two bins".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("histogram value {v}")));
        }
        let n = values.len();
        if n == 0 {
            return Ok(Histogram { n, bins: Vec::new() });
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return Ok(Histogram { n, bins: vec![Bin { lo, hi, count: n, fraction: 1.0 }] });
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in values {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        let bins = counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| Bin {
                lo: lo + width * i as f64,
                hi: if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 },
                count,
                fraction: count as f64 / n as f64,
            })
            .collect();
        Ok(Histogram { n, bins })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,fraction\n");
        for b in &self.bins {
            out.push_str(&format!("{},{},{},{}\n", b.lo, b.hi, b.count, b.fraction));
        }
        out
    }
}

/// Histogram of `density(sample)` over `samples`.
pub fn export_distribution<F>(samples: &[Sample], density: F, bins: usize, exec: Execution) -> Result<Histogram>
where
    F: Fn(&Sample) -> Result<f64> + Send + Sync,
{
    let values = par::try_map(exec, samples, density)?;
    Histogram::from_values(&values, bins)
}
