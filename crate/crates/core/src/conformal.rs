//! Split conformal calibration and set-valued prediction over `{0, 1}`.
//!
//! Scores are `|y - p|`. The calibrated threshold `q_hat` is the k-th
//! smallest score with `k = ceil((1 - alpha)(n + 1))`, and the prediction
//! set holds every label whose score would not exceed it: `0` when
//! `p <= q_hat`, `1` when `p >= 1 - q_hat`. With `q_hat < 0.5` the middle
//! band of probabilities gets the empty set, which is reported rather than
//! hidden.

use std::fmt;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{complement, read_json, stratified_kfold_indices, write_json, Dataset};
use crate::error::{validation, Error, Result};

pub fn nonconformity(y: u8, p_hat: f64) -> f64 {
    (f64::from(y) - p_hat).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Split,
    Cross,
    Pooled,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Split => "split",
            Strategy::Cross => "cross",
            Strategy::Pooled => "pooled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub q_hat: f64,
    pub alpha: f64,
    pub n_cal: usize,
    pub strategy: Strategy,
    /// True once [`conservative_adjust`] has been applied.
    pub conservative: bool,
    /// Relative inflation applied to the threshold; 0 when unused.
    pub inflation: f64,
    /// Threshold before inflation: an order statistic of the scores, or 1
    /// when the calibration set is too small for `alpha`.
    pub q_hat_base: f64,
}

impl CalibrationResult {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }

    /// Lower bound `k / (n + 1)` on marginal coverage before inflation.
    pub fn coverage_bound(&self) -> f64 {
        let k = order_index(self.n_cal, self.alpha);
        (k.min(self.n_cal + 1)) as f64 / (self.n_cal + 1) as f64
    }
}

fn order_index(n: usize, alpha: f64) -> usize {
    // Round away float noise such as 0.9 * 100 = 90.00000000000001.
    let raw = (1.0 - alpha) * (n + 1) as f64;
    let r = raw.round();
    let k = if (raw - r).abs() < 1e-9 { r } else { raw.ceil() };
    k as usize
}

/// Finite-sample conformal quantile of `scores`.
pub fn calibrate_split(scores: &[f64], alpha: f64) -> Result<CalibrationResult> {
    calibrate_with(scores, alpha, Strategy::Split)
}

fn calibrate_with(scores: &[f64], alpha: f64, strategy: Strategy) -> Result<CalibrationResult> {
    if scores.is_empty() {
        return Err(validation!("calibration needs at least one score"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(validation!("alpha must lie in (0, 1), got {alpha}"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(validation!("calibration scores contain NaN"));
    }
    let n = scores.len();
    let k = order_index(n, alpha);
    let q = if k > n {
        warn!("{n} calibration scores are too few for alpha = {alpha}; q_hat set to 1");
        1.0
    } else {
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted[k.max(1) - 1]
    };
    Ok(CalibrationResult {
        q_hat: q,
        alpha,
        n_cal: n,
        strategy,
        conservative: false,
        inflation: 0.0,
        q_hat_base: q,
    })
}

/// Concatenates per-SME score lists and calibrates once.
pub fn calibrate_pooled(per_sme_scores: &[Vec<f64>], alpha: f64) -> Result<CalibrationResult> {
    let all: Vec<f64> = per_sme_scores.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(validation!("every calibration list is empty"));
    }
    calibrate_with(&all, alpha, Strategy::Pooled)
}

/// K-fold cross-conformal calibration for a single SME. `fit_predict`
/// receives a training fold and a held-out fold and returns probabilities
/// for the held-out rows; every row is scored exactly once.
pub fn calibrate_cross<F>(data: &Dataset, k: usize, seed: u64, alpha: f64, mut fit_predict: F) -> Result<CalibrationResult>
where
    F: FnMut(&Dataset, &Dataset) -> Result<Vec<f64>>,
{
    let folds = stratified_kfold_indices(data, k, seed)?;
    let mut scores = Vec::with_capacity(data.n_rows());
    for (f, test_idx) in folds.iter().enumerate() {
        let train = data.subset(&complement(data.n_rows(), test_idx));
        let test = data.subset(test_idx);
        let probs = fit_predict(&train, &test).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("fold {f}: {m}")),
            Error::Convergence(m) => Error::Convergence(format!("fold {f}: {m}")),
            other => other,
        })?;
        if probs.len() != test.n_rows() {
            return Err(validation!("fold {f}: {} predictions for {} rows", probs.len(), test.n_rows()));
        }
        scores.extend(probs.iter().zip(test.labels()).map(|(&p, &y)| nonconformity(y, p)));
    }
    calibrate_with(&scores, alpha, Strategy::Cross)
}

/// `q_hat' = min(1, q_hat * (1 + inflation))`.
pub fn conservative_adjust(result: &CalibrationResult, inflation: f64) -> Result<CalibrationResult> {
    if !(inflation >= 0.0 && inflation.is_finite()) {
        return Err(validation!("inflation must be non-negative, got {inflation}"));
    }
    if !(0.1..=0.3).contains(&inflation) {
        warn!("inflation {inflation} is outside the usual [0.1, 0.3] band");
    }
    Ok(CalibrationResult {
        q_hat: (result.q_hat_base * (1.0 + inflation)).min(1.0),
        conservative: true,
        inflation,
        ..result.clone()
    })
}

/// Calibration plan chosen from the number of SMEs and their sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyChoice {
    pub strategy: Strategy,
    /// Inflation to apply afterwards, if any.
    pub inflation: Option<f64>,
}

/// Default inflation for small, few-SME settings.
pub const DEFAULT_INFLATION: f64 = 0.2;

/// Five or more SMEs pool their calibration sets; fewer SMEs use
/// cross-conformal calibration, inflated when the smallest SME has under
/// 100 rows.
pub fn select_strategy(n_smes: usize, min_rows: usize) -> StrategyChoice {
    if n_smes >= 5 {
        StrategyChoice {
            strategy: Strategy::Pooled,
            inflation: None,
        }
    } else if min_rows >= 100 {
        StrategyChoice {
            strategy: Strategy::Cross,
            inflation: None,
        }
    } else {
        StrategyChoice {
            strategy: Strategy::Cross,
            inflation: Some(DEFAULT_INFLATION),
        }
    }
}

/// A subset of `{0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictionSet {
    Empty,
    Zero,
    One,
    Both,
}

impl PredictionSet {
    pub fn from_membership(has_zero: bool, has_one: bool) -> Self {
        match (has_zero, has_one) {
            (false, false) => PredictionSet::Empty,
            (true, false) => PredictionSet::Zero,
            (false, true) => PredictionSet::One,
            (true, true) => PredictionSet::Both,
        }
    }

    pub fn contains(self, y: u8) -> bool {
        matches!(
            (self, y),
            (PredictionSet::Zero | PredictionSet::Both, 0) | (PredictionSet::One | PredictionSet::Both, 1)
        )
    }

    pub fn size(self) -> usize {
        match self {
            PredictionSet::Empty => 0,
            PredictionSet::Zero | PredictionSet::One => 1,
            PredictionSet::Both => 2,
        }
    }

    pub fn labels(self) -> Vec<u8> {
        [0u8, 1].into_iter().filter(|&y| self.contains(y)).collect()
    }

    /// Confidence word: singletons are `low` uncertainty, `{0,1}` is
    /// `high`, the empty set calls for recalibration.
    pub fn uncertainty(self) -> &'static str {
        match self {
            PredictionSet::Zero | PredictionSet::One => "low",
            PredictionSet::Both => "high",
            PredictionSet::Empty => "undefined",
        }
    }

    /// Suggested action tier for the set.
    pub fn action_tier(self) -> &'static str {
        match self {
            PredictionSet::One => "high-risk churner",
            PredictionSet::Zero => "low-risk retained",
            PredictionSet::Both => "uncertain: gather more data",
            PredictionSet::Empty => "recalibrate",
        }
    }
}

impl fmt::Display for PredictionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictionSet::Empty => "{}",
            PredictionSet::Zero => "{0}",
            PredictionSet::One => "{1}",
            PredictionSet::Both => "{0,1}",
        })
    }
}

impl Serialize for PredictionSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.labels().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PredictionSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<u8>::deserialize(d)?;
        if labels.iter().any(|&y| y > 1) {
            return Err(serde::de::Error::custom("prediction sets hold only 0 and 1"));
        }
        Ok(PredictionSet::from_membership(labels.contains(&0), labels.contains(&1)))
    }
}

pub fn predict_set(p_hat: f64, q_hat: f64) -> PredictionSet {
    PredictionSet::from_membership(p_hat <= q_hat, p_hat >= 1.0 - q_hat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    #[serde(rename = "Empirical Coverage")]
    pub coverage: f64,
    #[serde(rename = "Singleton Sets")]
    pub singleton_rate: f64,
    #[serde(rename = "Doubleton Sets")]
    pub doubleton_rate: f64,
    #[serde(rename = "Empty Sets")]
    pub empty_rate: f64,
    #[serde(rename = "Average Set Size")]
    pub average_set_size: f64,
    pub n: usize,
}

pub fn coverage_audit(sets: &[PredictionSet], labels: &[u8]) -> Result<CoverageReport> {
    if sets.len() != labels.len() {
        return Err(validation!("{} sets but {} labels", sets.len(), labels.len()));
    }
    if sets.is_empty() {
        return Err(validation!("nothing to audit"));
    }
    let n = sets.len() as f64;
    let frac = |f: &dyn Fn(PredictionSet) -> bool| sets.iter().filter(|&&s| f(s)).count() as f64 / n;
    Ok(CoverageReport {
        coverage: sets.iter().zip(labels).filter(|(s, &y)| s.contains(y)).count() as f64 / n,
        singleton_rate: frac(&|s| s.size() == 1),
        doubleton_rate: frac(&|s| s.size() == 2),
        empty_rate: frac(&|s| s.size() == 0),
        average_set_size: sets.iter().map(|s| s.size()).sum::<usize>() as f64 / n,
        n: sets.len(),
    })
}
