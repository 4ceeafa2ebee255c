use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::math::{clip_prob, log_loss};

/// Threshold metrics plus AUC and log loss for one scored sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `None` when the sample holds a single class.
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub log_loss: f64,
    pub threshold: f64,
    pub n: usize,
    /// Set when nothing was predicted positive, so precision is reported
    /// as 0 by convention.
    pub no_positive_predictions: bool,
}

/// Rank-statistic AUC: the probability a random positive outscores a random
/// negative, ties counted one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(validation!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(validation!("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(validation!("AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of average ranks (1-based) over positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Confusion-matrix metrics at `threshold` (scores `>= threshold` are
/// predicted positive), AUC and clipped log loss.
pub fn classification_metrics(probs: &[f64], labels: &[u8], threshold: f64) -> Result<MetricReport> {
    if probs.is_empty() {
        return Err(validation!("no predictions to score"));
    }
    if probs.len() != labels.len() {
        return Err(validation!("{} probabilities but {} labels", probs.len(), labels.len()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(validation!("probability {p} outside [0, 1]"));
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let n = probs.len();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let clipped: Vec<f64> = probs.iter().map(|&p| clip_prob(p)).collect();
    Ok(MetricReport {
        auc: auc(probs, labels).ok(),
        accuracy: ratio(tp + tn, n),
        precision,
        recall,
        f1,
        log_loss: log_loss(&clipped, labels),
        threshold,
        n,
        no_positive_predictions: tp + fp == 0,
    })
}
