//! Evaluation metrics: equality of returns and gift-weight summaries.

use serde::{Deserialize, Serialize};

use crate::error::{LaseError, Result};

/// One minus the Gini index of per-agent returns.
pub fn equality(returns: &[f64]) -> Result<f64> {
    let total: f64 = returns.iter().sum();
    if returns.is_empty() || !(total > 0.0) {
        return Err(LaseError::Domain(format!("equality needs a positive total return, got {total}")));
    }
    let n = returns.len() as f64;
    let spread: f64 = returns.iter().flat_map(|a| returns.iter().map(move |b| (a - b).abs())).sum();
    Ok(1.0 - spread / (2.0 * n * total))
}

/// Mean and standard deviation of one directed gift weight across episodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub giver: usize,
    pub receiver: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GiftSummary {
    /// Mean over every included off-diagonal entry and episode.
    pub mean: f64,
    pub pairs: Vec<PairStats>,
}

/// Summarises per-episode mean gift matrices over the trailing `window`
/// episodes. Only rows listed in `givers` count; an empty list means all.
pub fn gift_weight_mean(history: &[Vec<Vec<f64>>], window: usize, givers: &[usize]) -> Result<GiftSummary> {
    if window == 0 || window > history.len() {
        return Err(LaseError::Domain(format!("window {window} not within 1..={}", history.len())));
    }
    let tail = &history[history.len() - window..];
    let n = tail[0].len();
    let rows: Vec<usize> = if givers.is_empty() { (0..n).collect() } else { givers.to_vec() };
    let mut pairs = Vec::new();
    for &i in &rows {
        for j in (0..n).filter(|&j| j != i) {
            let values: Vec<f64> = tail.iter().map(|m| m[i][j]).collect();
            let mean = values.iter().sum::<f64>() / window as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / window as f64;
            pairs.push(PairStats { giver: i, receiver: j, mean, std: var.sqrt() });
        }
    }
    let mean = if pairs.is_empty() { 0.0 } else { pairs.iter().map(|p| p.mean).sum::<f64>() / pairs.len() as f64 };
    Ok(GiftSummary { mean, pairs })
}

/// Equality of per-agent returns averaged over the trailing `window` episodes.
pub fn trailing_equality(returns: &[Vec<f64>], window: usize) -> Result<f64> {
    if window == 0 || window > returns.len() {
        return Err(LaseError::Domain(format!("window {window} not within 1..={}", returns.len())));
    }
    let tail = &returns[returns.len() - window..];
    let n = tail[0].len();
    let means: Vec<f64> = (0..n).map(|i| tail.iter().map(|r| r[i]).sum::<f64>() / window as f64).collect();
    equality(&means)
}
