//! Softmax and symmetric cross-entropy (reverse CE + CE) with closed-form
//! gradients through the softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn default_clamp() -> f64 {
    -4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceConfig {
    /// Weight of the reverse cross-entropy term.
    pub lambda: f64,
    /// Weight of the cross-entropy term.
    pub sigma: f64,
    /// Value substituted for `log 0` on one-hot targets.
    #[serde(default = "default_clamp")]
    pub log_zero_clamp: f64,
}

impl Default for SceConfig {
    fn default() -> Self {
        SceConfig { lambda: 1.0, sigma: 0.1, log_zero_clamp: default_clamp() }
    }
}

impl SceConfig {
    /// Plain cross-entropy.
    pub fn cross_entropy() -> Self {
        SceConfig { lambda: 0.0, sigma: 1.0, log_zero_clamp: default_clamp() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda >= 0.0
            && self.sigma >= 0.0
            && self.lambda.is_finite()
            && self.sigma.is_finite()
            && (self.lambda > 0.0 || self.sigma > 0.0);
        if !ok {
            return Err(Error::InvalidConfig("lambda and sigma must be >= 0 and not both zero".into()));
        }
        if !(self.log_zero_clamp < 0.0 && self.log_zero_clamp.is_finite()) {
            return Err(Error::InvalidConfig("log_zero_clamp must be finite and negative".into()));
        }
        Ok(())
    }
}

const NORM_TOL: f64 = 1e-9;

fn one_hot_index(target: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (k, &y) in target.iter().enumerate() {
        if y == 1.0 && hot.is_none() {
            hot = Some(k);
        } else if y != 0.0 {
            return Err(Error::InvalidInput("target is not one-hot".into()));
        }
    }
    hot.ok_or_else(|| Error::InvalidInput("target is not one-hot".into()))
}

fn check_distribution(pred: &[f64]) -> Result<()> {
    if pred.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("predicted probabilities outside [0, 1]".into()));
    }
    let sum: f64 = pred.iter().sum();
    if (sum - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidInput(format!("predicted distribution sums to {sum}")));
    }
    Ok(())
}

/// SCE loss for one position: `lambda * RCE + sigma * CE`.
pub fn sce_loss(pred: &[f64], target: &[f64], cfg: &SceConfig) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Dimension { expected: target.len(), actual: pred.len() });
    }
    check_distribution(pred)?;
    let t = one_hot_index(target)?;
    let ce = -pred[t].ln();
    // log y_k is 0 on the hot entry and clamped to A elsewhere
    let rce = -cfg.log_zero_clamp * (1.0 - pred[t]);
    let loss = cfg.lambda * rce + cfg.sigma * ce;
    Ok(loss.max(0.0))
}

/// Mean SCE loss over `N` positions.
pub fn sce_loss_mean(preds: &[Vec<f64>], targets: &[Vec<f64>], cfg: &SceConfig) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::Dimension { expected: targets.len(), actual: preds.len() });
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (p, y) in preds.iter().zip(targets) {
        total += sce_loss(p, y, cfg)?;
    }
    Ok(total / preds.len() as f64)
}

/// Loss and gradient w.r.t. the logits for a hot index `target`.
///
/// CE term: `softmax(z) - y`. RCE term: `-p_j (l_j - sum_k p_k l_k)` where
/// `l` is the clamped log-target vector.
pub fn sce_loss_grad(logits: &[f64], target: usize, cfg: &SceConfig) -> (f64, Vec<f64>) {
    let logp = log_softmax(logits);
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let a = cfg.log_zero_clamp;
    let ce = -logp[target];
    let rce = -a * (1.0 - p[target]);
    // sum_k p_k l_k
    let mean_l = a * (1.0 - p[target]);
    let grad = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let l_j = if j == target { 0.0 } else { a };
            let g_rce = -pj * (l_j - mean_l);
            let g_ce = pj - if j == target { 1.0 } else { 0.0 };
            cfg.lambda * g_rce + cfg.sigma * g_ce
        })
        .collect();
    (cfg.lambda * rce + cfg.sigma * ce, grad)
}

/// Gradient of the SCE loss w.r.t. the logits for a one-hot target.
pub fn sce_gradient(logits: &[f64], target: &[f64], cfg: &SceConfig) -> Result<Vec<f64>> {
    if logits.len() != target.len() {
        return Err(Error::Dimension { expected: target.len(), actual: logits.len() });
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let t = one_hot_index(target)?;
    Ok(sce_loss_grad(logits, t, cfg).1)
}
