//! Path-dependent tree Shapley attributions and their conversion into a
//! Gaussian coefficient prior.
//!
//! Attributions are computed in margin (log-odds) space with the
//! polynomial-time path algorithm, using the per-node training covers
//! recorded when the trees were fit as the conditional-expectation
//! weights. The prior mean is the mean absolute attribution divided by the
//! raw feature scale, so it is elementwise non-negative: the sign of each
//! effect is not recovered. The prior variance is the between-source
//! spread of per-source mean absolute attributions, floored and inflated
//! by `1 + lambda` for domain shift.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json, Dataset, StandardizationStats};
use crate::error::{validation, Result};
use crate::eval::auc;
use crate::gbdt::{TreeEnsemble, TreeNode};
use crate::math::{dot, mean, population_variance};
use crate::rng;

/// Lower bound applied to every prior variance before inflation.
pub const PRIOR_VARIANCE_FLOOR: f64 = 1e-4;

/// Per-row attributions. For every row,
/// `base_value + values[i].sum() == margin(x_i)` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapMatrix {
    pub values: Vec<Vec<f64>>,
    pub base_value: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct PathElem {
    feature: isize,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut [PathElem], l: usize, zero: f64, one: f64, feature: isize) {
    path[l] = PathElem {
        feature,
        zero,
        one,
        weight: if l == 0 { 1.0 } else { 0.0 },
    };
    let denom = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / denom;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / denom;
    }
}

fn unwind(path: &mut [PathElem], l: usize, k: usize) {
    let PathElem { one, zero, .. } = path[k];
    let denom = (l + 1) as f64;
    let mut next = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let tmp = path[j].weight;
            path[j].weight = next * denom / ((j + 1) as f64 * one);
            next = tmp - path[j].weight * zero * (l - j) as f64 / denom;
        } else {
            path[j].weight = path[j].weight * denom / (zero * (l - j) as f64);
        }
    }
    for j in k..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
}

fn unwound_sum(path: &[PathElem], l: usize, k: usize) -> f64 {
    let PathElem { one, zero, .. } = path[k];
    let denom = (l + 1) as f64;
    let mut total = 0.0;
    if one != 0.0 {
        let mut next = path[l].weight;
        for j in (0..l).rev() {
            let tmp = next * denom / ((j + 1) as f64 * one);
            total += tmp;
            next = path[j].weight - tmp * zero * (l - j) as f64 / denom;
        }
    } else {
        for j in (0..l).rev() {
            total += path[j].weight / (zero * (l - j) as f64 / denom);
        }
    }
    total
}

struct TreeShap<'a> {
    x: &'a [f64],
    phi: &'a mut [f64],
    scale: f64,
}

impl TreeShap<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        node: &TreeNode,
        buf: &mut [PathElem],
        parent: usize,
        depth: usize,
        zero: f64,
        one: f64,
        feature: isize,
    ) {
        let off = parent + depth + 1;
        buf.copy_within(parent..parent + depth + 1, off);
        let path = &mut buf[off..];
        extend(path, depth, zero, one, feature);
        match node {
            TreeNode::Leaf { value, .. } => {
                for i in 1..=depth {
                    let w = unwound_sum(path, depth, i);
                    let e = path[i];
                    self.phi[e.feature as usize] += self.scale * w * (e.one - e.zero) * value;
                }
            }
            TreeNode::Split {
                feature_index,
                threshold,
                cover,
                left,
                right,
                ..
            } => {
                let (hot, cold) = if self.x[*feature_index] <= *threshold {
                    (left, right)
                } else {
                    (right, left)
                };
                let mut depth = depth;
                let mut incoming_zero = 1.0;
                let mut incoming_one = 1.0;
                if let Some(k) = (1..=depth).find(|&k| path[k].feature == *feature_index as isize)
                {
                    incoming_zero = path[k].zero;
                    incoming_one = path[k].one;
                    unwind(path, depth, k);
                    depth -= 1;
                }
                let f = *feature_index as isize;
                self.recurse(
                    hot,
                    buf,
                    off,
                    depth + 1,
                    incoming_zero * hot.cover() / cover,
                    incoming_one,
                    f,
                );
                self.recurse(
                    cold,
                    buf,
                    off,
                    depth + 1,
                    incoming_zero * cold.cover() / cover,
                    0.0,
                    f,
                );
            }
        }
    }
}

/// Cover-weighted mean leaf value: the tree's expected output with no
/// features known.
pub fn tree_expected_value(tree: &TreeNode) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    tree.visit_leaves(&mut |v, c| {
        num += v * c;
        den += c;
    });
    num / den
}

/// Expected margin over the attribution reference.
pub fn base_value(model: &TreeEnsemble) -> f64 {
    let s: f64 = model.trees.iter().map(tree_expected_value).sum();
    model.init_logodds + model.learning_rate * s
}

/// Shapley attributions of `x` in margin space and the base value they are
/// measured from.
pub fn tree_shap(model: &TreeEnsemble, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    if x.len() != model.n_features() {
        return Err(validation!(
            "feature vector has length {}, model expects {}",
            x.len(),
            model.n_features()
        ));
    }
    let mut phi = vec![0.0; x.len()];
    let max_depth = model.trees.iter().map(TreeNode::depth).max().unwrap_or(0);
    let mut buf = vec![PathElem::default(); (max_depth + 3) * (max_depth + 4)];
    let mut walker = TreeShap {
        x,
        phi: &mut phi,
        scale: model.learning_rate,
    };
    for tree in &model.trees {
        walker.recurse(tree, &mut buf, 0, 0, 1.0, 1.0, -1);
    }
    Ok((phi, base_value(model)))
}

pub fn shap_matrix(model: &TreeEnsemble, data: &Dataset) -> Result<ShapMatrix> {
    let values = data
        .rows()
        .map(|r| tree_shap(model, r).map(|(phi, _)| phi))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShapMatrix {
        values,
        base_value: base_value(model),
    })
}

/// `phi_j = mean_i |SHAP_j(x_i)|`.
pub fn mean_abs_shap(model: &TreeEnsemble, data: &Dataset) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(validation!("mean |SHAP| needs at least one row"));
    }
    let mut acc = vec![0.0; model.n_features()];
    for r in data.rows() {
        let (phi, _) = tree_shap(model, r)?;
        for (a, v) in acc.iter_mut().zip(phi) {
            *a += v.abs();
        }
    }
    let n = data.n_rows() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Where a prior came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorProvenance {
    /// `(tag, rows)` for every source tag, sorted by tag.
    pub tags: Vec<(String, usize)>,
    pub n_rows: usize,
    /// True when fewer than two tags were available and the variance fell
    /// back to `(floor + phi^2) * (1 + lambda)`.
    pub single_tag_fallback: bool,
    pub variance_floor: f64,
}

/// Gaussian prior over coefficients: mean `beta0`, diagonal covariance
/// `sigma0_diag` (variances).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub feature_names: Vec<String>,
    pub beta0: Vec<f64>,
    pub sigma0_diag: Vec<f64>,
    pub lambda: f64,
    pub provenance: PriorProvenance,
}

impl PriorSpec {
    pub fn dim(&self) -> usize {
        self.beta0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.feature_names.len();
        if self.beta0.len() != p || self.sigma0_diag.len() != p {
            return Err(validation!("prior vectors do not match {p} feature names"));
        }
        if self.beta0.iter().any(|b| !b.is_finite()) {
            return Err(validation!("prior mean has non-finite entries"));
        }
        if self.sigma0_diag.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(validation!("prior variances must be positive and finite"));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let prior: PriorSpec = read_json(path)?;
        prior.validate()?;
        Ok(prior)
    }
}

/// Population variance across sources of each feature's mean |SHAP|,
/// floored at [`PRIOR_VARIANCE_FLOOR`] and scaled by `1 + lambda`.
/// `per_tag[k][j]` is source `k`'s value for feature `j`.
pub fn between_tag_variance(per_tag: &[Vec<f64>], lambda: f64) -> Vec<f64> {
    let p = per_tag.first().map_or(0, Vec::len);
    (0..p)
        .map(|j| {
            let v: Vec<f64> = per_tag.iter().map(|t| t[j]).collect();
            population_variance(&v).max(PRIOR_VARIANCE_FLOOR) * (1.0 + lambda)
        })
        .collect()
}

/// Builds the coefficient prior from a fitted ensemble and tagged
/// validation data.
///
/// `val` must be in the space the model was trained in; `stats` are the
/// raw-feature standardization statistics whose `stds` rescale the mean
/// absolute attributions to coefficient units.
pub fn extract_priors(
    model: &TreeEnsemble,
    val: &Dataset,
    stats: &StandardizationStats,
    lambda_scale: f64,
) -> Result<PriorSpec> {
    if val.is_empty() {
        return Err(validation!("validation set is empty"));
    }
    if !(lambda_scale >= 0.0) {
        return Err(validation!("lambda must be non-negative, got {lambda_scale}"));
    }
    let p = model.n_features();
    if val.n_features() != p || stats.stds.len() != p {
        return Err(validation!("model, validation data and stats disagree on feature count"));
    }
    if let Some(k) = stats.stds.iter().position(|s| !(*s > 0.0)) {
        return Err(validation!("std of feature {k} is not positive"));
    }

    let mut by_tag: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    match val.source_tags() {
        Some(tags) => {
            for (i, t) in tags.iter().enumerate() {
                by_tag.entry(t.as_str()).or_default().push(i);
            }
        }
        None => {
            by_tag.insert("", (0..val.n_rows()).collect());
        }
    }

    // One pass of attributions, reused for the overall and per-tag means.
    let abs_shap: Vec<Vec<f64>> = val
        .rows()
        .map(|r| tree_shap(model, r).map(|(phi, _)| phi.iter().map(|v| v.abs()).collect()))
        .collect::<Result<_>>()?;
    let mean_rows = |rows: &[usize]| -> Vec<f64> {
        (0..p)
            .map(|k| rows.iter().map(|&i| abs_shap[i][k]).sum::<f64>() / rows.len() as f64)
            .collect()
    };
    let all: Vec<usize> = (0..val.n_rows()).collect();
    let phi = mean_rows(&all);
    let beta0: Vec<f64> = phi.iter().zip(&stats.stds).map(|(f, s)| f / s).collect();

    let single = by_tag.len() < 2;
    let sigma0_diag: Vec<f64> = if single {
        warn!("prior extraction saw fewer than two source tags; using the single-tag fallback");
        phi.iter()
            .map(|f| (PRIOR_VARIANCE_FLOOR + f * f) * (1.0 + lambda_scale))
            .collect()
    } else {
        let per_tag: Vec<Vec<f64>> = by_tag.values().map(|rows| mean_rows(rows)).collect();
        between_tag_variance(&per_tag, lambda_scale)
    };

    let prior = PriorSpec {
        feature_names: model.feature_names.clone(),
        beta0,
        sigma0_diag,
        lambda: lambda_scale,
        provenance: PriorProvenance {
            tags: by_tag
                .iter()
                .map(|(t, rows)| (t.to_string(), rows.len()))
                .collect(),
            n_rows: val.n_rows(),
            single_tag_fallback: single,
            variance_floor: PRIOR_VARIANCE_FLOOR,
        },
    };
    prior.validate()?;
    Ok(prior)
}

/// Mean AUC of linear scores `beta . x` over coefficient draws
/// `beta ~ N(beta0, diag(sigma0))`.
pub fn prior_only_auc(prior: &PriorSpec, holdout: &Dataset, draws: usize, seed: u64) -> Result<f64> {
    if draws == 0 {
        return Err(validation!("draws must be at least 1"));
    }
    if holdout.n_features() != prior.dim() {
        return Err(validation!(
            "holdout has {} features, prior has {}",
            holdout.n_features(),
            prior.dim()
        ));
    }
    if !holdout.has_both_classes() {
        return Err(validation!("holdout must contain both classes for AUC"));
    }
    let mut rng = rng::seeded(seed);
    let mut aucs = Vec::with_capacity(draws);
    for _ in 0..draws {
        let beta: Vec<f64> = prior
            .beta0
            .iter()
            .zip(&prior.sigma0_diag)
            .map(|(&m, &v)| Normal::new(m, v.sqrt()).expect("valid normal").sample(&mut rng))
            .collect();
        let scores: Vec<f64> = holdout.rows().map(|r| dot(&beta, r)).collect();
        aucs.push(auc(&scores, holdout.labels())?);
    }
    Ok(mean(&aucs))
}
