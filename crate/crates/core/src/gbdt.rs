//! Gradient-boosted regression trees on the logistic loss.
//!
//! Each boosting stage fits a depth- and leaf-size-constrained
//! squared-error regression tree to the pseudo-residuals
//! `r_i = y_i - logistic(F(x_i))` of the current ensemble. Splits are found
//! by exact greedy search over pre-sorted feature columns; leaf values are
//! ridge-shrunk residual means `sum(r) / (count + l2_leaf)`.

use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{validation, Error, Result};
use crate::math::{clip_prob, log_loss, logistic};
use crate::rng;

/// Boosting hyperparameters. Defaults are the conservative settings used
/// for the public-corpus base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_leaf: f64,
    pub row_subsample: f64,
    pub feature_subsample: f64,
    pub early_stopping_rounds: usize,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            learning_rate: 0.03,
            max_depth: 6,
            min_samples_leaf: 20,
            l2_leaf: 3.0,
            row_subsample: 0.8,
            feature_subsample: 0.8,
            early_stopping_rounds: 50,
            seed: 42,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(validation!("iterations, max_depth and min_samples_leaf must be positive"));
        }
        if self.early_stopping_rounds == 0 {
            return Err(validation!("early_stopping_rounds must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.l2_leaf >= 0.0) {
            return Err(validation!("learning_rate must be > 0 and l2_leaf >= 0"));
        }
        for (name, r) in [
            ("row_subsample", self.row_subsample),
            ("feature_subsample", self.feature_subsample),
        ] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(validation!("{name} must be in (0, 1], got {r}"));
            }
        }
        Ok(())
    }
}

/// A regression tree node. Rows with `x[feature_index] <= threshold` go
/// left. `cover` is the number of fitting rows that reached the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature_index: usize,
        threshold: f64,
        gain: f64,
        cover: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature_index] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Split { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Calls `f(feature_index, gain)` for every split node.
    pub fn visit_splits(&self, f: &mut impl FnMut(usize, f64)) {
        if let TreeNode::Split {
            feature_index,
            gain,
            left,
            right,
            ..
        } = self
        {
            f(*feature_index, *gain);
            left.visit_splits(f);
            right.visit_splits(f);
        }
    }

    /// Calls `f(value, cover)` for every leaf.
    pub fn visit_leaves(&self, f: &mut impl FnMut(f64, f64)) {
        match self {
            TreeNode::Leaf { value, cover } => f(*value, *cover),
            TreeNode::Split { left, right, .. } => {
                left.visit_leaves(f);
                right.visit_leaves(f);
            }
        }
    }
}

/// Additive ensemble: `margin(x) = init_logodds + learning_rate * sum_m tree_m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub init_logodds: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<TreeNode>,
}

impl TreeEnsemble {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(validation!(
                "feature vector has length {}, model expects {}",
                x.len(),
                self.n_features()
            ));
        }
        Ok(())
    }

    /// Sums trees in index order so results are bit-reproducible.
    pub(crate) fn margin_unchecked(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.init_logodds + self.learning_rate * s
    }

    pub fn predict_margin(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.margin_unchecked(x))
    }

    /// Churn probability, clipped to `[1e-12, 1 - 1e-12]`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(clip_prob(logistic(self.predict_margin(x)?)))
    }

    pub fn predict_proba_all(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.rows().map(|r| self.predict_proba(r)).collect()
    }

    /// Gain-based importance normalized to sum to one.
    pub fn feature_importance(&self) -> Vec<f64> {
        let p = self.n_features();
        let mut gains = vec![0.0; p];
        for t in &self.trees {
            t.visit_splits(&mut |k, g| gains[k] += g);
        }
        let total: f64 = gains.iter().sum();
        if !(total > 0.0) {
            warn!("ensemble has no positive-gain splits; importance is uniform");
            return vec![1.0 / p as f64; p];
        }
        gains.iter().map(|g| g / total).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Per-iteration losses recorded during fitting. Index `m` is the loss
/// after `m` trees (index 0 is the constant model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Number of trees kept in the returned ensemble.
    pub best_iteration: usize,
    pub stopped_early: bool,
}

pub fn fit_gbdt(train: &Dataset, val: &Dataset, config: &GbdtConfig) -> Result<TreeEnsemble> {
    fit_gbdt_with_history(train, val, config).map(|(m, _)| m)
}

/// Fits the ensemble and returns the loss curves alongside it.
pub fn fit_gbdt_with_history(
    train: &Dataset,
    val: &Dataset,
    config: &GbdtConfig,
) -> Result<(TreeEnsemble, FitHistory)> {
    config.validate()?;
    if !train.has_both_classes() {
        return Err(validation!(
            "training labels must contain both classes (initial log-odds undefined)"
        ));
    }
    if val.is_empty() {
        return Err(validation!("validation set is empty"));
    }
    if val.feature_names() != train.feature_names() {
        return Err(validation!("train and validation feature names differ"));
    }

    let n = train.n_rows();
    let p = train.n_features();
    let pbar = train.positive_rate();
    let f0 = (pbar / (1.0 - pbar)).ln();
    let mut ensemble = TreeEnsemble {
        init_logodds: f0,
        learning_rate: config.learning_rate,
        feature_names: train.feature_names().to_vec(),
        trees: Vec::new(),
    };

    let sorted = presort(train);
    let mut rng = rng::seeded(config.seed);
    let mut margin = vec![f0; n];
    let mut val_margin = vec![f0; val.n_rows()];
    let probs = |m: &[f64]| m.iter().map(|&z| logistic(z)).collect::<Vec<_>>();
    let mut history = FitHistory {
        train_loss: vec![log_loss(&probs(&margin), train.labels())],
        val_loss: vec![log_loss(&probs(&val_margin), val.labels())],
        best_iteration: 0,
        stopped_early: false,
    };
    let mut best_val = f64::INFINITY;

    let n_rows_sampled = ((config.row_subsample * n as f64).round() as usize).clamp(1, n);
    let n_feats_sampled = ((config.feature_subsample * p as f64).round() as usize).clamp(1, p);

    for m in 1..=config.iterations {
        let residual: Vec<f64> = margin
            .iter()
            .zip(train.labels())
            .map(|(&z, &y)| y as f64 - logistic(z))
            .collect();
        let rows: Vec<usize> = if n_rows_sampled < n {
            index::sample(&mut rng, n, n_rows_sampled).into_vec()
        } else {
            (0..n).collect()
        };
        let mut feats: Vec<usize> = if n_feats_sampled < p {
            index::sample(&mut rng, p, n_feats_sampled).into_vec()
        } else {
            (0..p).collect()
        };
        feats.sort_unstable();

        let tree = TreeBuilder {
            data: train,
            sorted: &sorted,
            residual: &residual,
            config,
        }
        .build(&rows, &feats);

        for (i, z) in margin.iter_mut().enumerate() {
            *z += config.learning_rate * tree.predict(train.row(i));
        }
        for (i, z) in val_margin.iter_mut().enumerate() {
            *z += config.learning_rate * tree.predict(val.row(i));
        }
        ensemble.trees.push(tree);
        history
            .train_loss
            .push(log_loss(&probs(&margin), train.labels()));
        let vl = log_loss(&probs(&val_margin), val.labels());
        history.val_loss.push(vl);
        if vl < best_val {
            best_val = vl;
            history.best_iteration = m;
        } else if m - history.best_iteration >= config.early_stopping_rounds {
            history.stopped_early = true;
            break;
        }
    }
    ensemble.trees.truncate(history.best_iteration);
    Ok((ensemble, history))
}

/// Row indices sorted by each feature's value.
fn presort(data: &Dataset) -> Vec<Vec<u32>> {
    (0..data.n_features())
        .map(|k| {
            let mut idx: Vec<u32> = (0..data.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| {
                data.value(a as usize, k)
                    .total_cmp(&data.value(b as usize, k))
            });
            idx
        })
        .collect()
}

struct TreeBuilder<'a> {
    data: &'a Dataset,
    sorted: &'a [Vec<u32>],
    residual: &'a [f64],
    config: &'a GbdtConfig,
}

#[derive(Debug, Clone)]
struct ArenaNode {
    count: usize,
    sum: f64,
    depth: usize,
    split: Option<(usize, f64, f64, usize, usize)>, // feature, threshold, gain, left, right
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

const NO_NODE: u32 = u32::MAX;

impl TreeBuilder<'_> {
    fn build(&self, rows: &[usize], feats: &[usize]) -> TreeNode {
        let n = self.data.n_rows();
        let min_leaf = self.config.min_samples_leaf;
        let mut node_of = vec![NO_NODE; n];
        let mut root = ArenaNode {
            count: rows.len(),
            sum: 0.0,
            depth: 0,
            split: None,
        };
        for &i in rows {
            node_of[i] = 0;
            root.sum += self.residual[i];
        }
        let mut nodes = vec![root];
        let mut open: Vec<usize> = vec![0];

        while !open.is_empty() {
            let splittable: Vec<usize> = open
                .iter()
                .copied()
                .filter(|&id| {
                    nodes[id].depth < self.config.max_depth && nodes[id].count >= 2 * min_leaf
                })
                .collect();
            open.clear();
            if splittable.is_empty() {
                break;
            }
            let mut slot = vec![usize::MAX; nodes.len()];
            for (s, &id) in splittable.iter().enumerate() {
                slot[id] = s;
            }
            let mut best: Vec<Option<Candidate>> = vec![None; splittable.len()];
            let mut left_cnt = vec![0usize; splittable.len()];
            let mut left_sum = vec![0.0f64; splittable.len()];
            let mut last = vec![f64::NAN; splittable.len()];

            for &k in feats {
                left_cnt.iter_mut().for_each(|c| *c = 0);
                left_sum.iter_mut().for_each(|c| *c = 0.0);
                for &row in &self.sorted[k] {
                    let row = row as usize;
                    let id = node_of[row];
                    if id == NO_NODE {
                        continue;
                    }
                    let s = slot[id as usize];
                    if s == usize::MAX {
                        continue;
                    }
                    let v = self.data.value(row, k);
                    let nl = left_cnt[s];
                    if nl > 0 && v > last[s] {
                        let node = &nodes[id as usize];
                        let nr = node.count - nl;
                        if nl >= min_leaf && nr >= min_leaf {
                            let sl = left_sum[s];
                            let sr = node.sum - sl;
                            let gain = sl * sl / nl as f64 + sr * sr / nr as f64
                                - node.sum * node.sum / node.count as f64;
                            if best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: k,
                                    threshold: midpoint(last[s], v),
                                });
                            }
                        }
                    }
                    left_cnt[s] += 1;
                    left_sum[s] += self.residual[row];
                    last[s] = v;
                }
            }

            let mut children = Vec::new();
            for (s, &id) in splittable.iter().enumerate() {
                let Some(c) = best[s] else { continue };
                if !(c.gain > 0.0) {
                    continue;
                }
                let depth = nodes[id].depth + 1;
                let l = nodes.len();
                for _ in 0..2 {
                    nodes.push(ArenaNode {
                        count: 0,
                        sum: 0.0,
                        depth,
                        split: None,
                    });
                }
                nodes[id].split = Some((c.feature, c.threshold, c.gain, l, l + 1));
                children.push((id, c.feature, c.threshold, l));
            }
            if children.is_empty() {
                break;
            }
            let mut route = vec![None; nodes.len()];
            for &(id, feature, threshold, l) in &children {
                route[id] = Some((feature, threshold, l));
            }
            for &i in rows {
                let id = node_of[i] as usize;
                if let Some((feature, threshold, l)) = route[id] {
                    let child = if self.data.value(i, feature) <= threshold {
                        l
                    } else {
                        l + 1
                    };
                    node_of[i] = child as u32;
                    nodes[child].count += 1;
                    nodes[child].sum += self.residual[i];
                }
            }
            for &(_, _, _, l) in &children {
                open.push(l);
                open.push(l + 1);
            }
        }
        self.to_tree(&nodes, 0)
    }

    fn to_tree(&self, nodes: &[ArenaNode], id: usize) -> TreeNode {
        let node = &nodes[id];
        match node.split {
            Some((feature_index, threshold, gain, l, r)) => TreeNode::Split {
                feature_index,
                threshold,
                gain,
                cover: node.count as f64,
                left: Box::new(self.to_tree(nodes, l)),
                right: Box::new(self.to_tree(nodes, r)),
            },
            None => TreeNode::Leaf {
                value: node.sum / (node.count as f64 + self.config.l2_leaf),
                cover: node.count as f64,
            },
        }
    }
}

/// A threshold `t` with `a <= t < b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) * 0.5;
    if m < b {
        m
    } else {
        a
    }
}
