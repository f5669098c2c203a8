//! Free-energy scores from raw logits. Scores are negative energies
//! (`log sum exp`), so lower values mean further from what the student has
//! learned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyScore {
    /// Negative energy; the mean of `per_token` for sequences.
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_token: Option<Vec<f64>>,
}

/// Max-shifted `log sum_c exp(logit_c)`.
pub fn log_sum_exp(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("empty logits".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln())
}

pub fn free_energy(logits: &[f64]) -> Result<EnergyScore> {
    Ok(EnergyScore { value: log_sum_exp(logits)?, per_token: None })
}

/// Mean per-token negative energy over a sequence of logit rows of equal
/// width.
pub fn sequence_energy(token_logits: &[Vec<f64>]) -> Result<EnergyScore> {
    let Some(first) = token_logits.first() else {
        return Err(Error::InvalidInput("empty sequence".into()));
    };
    let width = first.len();
    let mut per_token = Vec::with_capacity(token_logits.len());
    for row in token_logits {
        if row.len() != width {
            return Err(Error::Dimension { expected: width, actual: row.len() });
        }
        per_token.push(log_sum_exp(row)?);
    }
    let value = per_token.iter().sum::<f64>() / per_token.len() as f64;
    Ok(EnergyScore { value, per_token: Some(per_token) })
}
