//! Gradient-boosted regression trees with exact greedy split search.
//!
//! Plain squared-error boosting: each tree fits the residuals of the current
//! ensemble, leaf values are mean residuals, and every tree's output is
//! shrunken by the learning rate before it joins the sum. No second-order
//! terms, no regularized objective, no subsampling.
//!
//! Split candidates are midpoints between consecutive distinct sorted values
//! of each feature. Gain is the squared-error reduction of the split; ties
//! resolve to the lowest feature index, then the lowest threshold. A node
//! splits only when the gain is strictly positive and both children keep at
//! least `min_samples_leaf` samples.

use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};
use crate::numkit::{population_mean_variance, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Route `x` to its leaf; `x <= threshold` goes left.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value } => *value,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.evaluate(x)
                } else {
                    right.evaluate(x)
                }
            }
        }
    }

    /// Length of the longest root-to-leaf split path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Reserved for compatibility with seeded fitting interfaces; the exact
    /// greedy search consumes no randomness.
    pub seed: u64,
}

impl Default for GbrtConfig {
    fn default() -> Self {
        GbrtConfig {
            n_estimators: 150,
            learning_rate: 0.08,
            max_depth: 8,
            min_samples_leaf: 5,
            seed: 0,
        }
    }
}

impl GbrtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(DmlError::invalid("n_estimators must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(DmlError::invalid(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 {
            return Err(DmlError::invalid("max_depth must be positive"));
        }
        if self.min_samples_leaf == 0 {
            return Err(DmlError::invalid("min_samples_leaf must be positive"));
        }
        Ok(())
    }
}

/// Fitted boosted ensemble: `base_score + Σ_k learning_rate · tree_k(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtModel {
    base_score: f64,
    trees: Vec<TreeNode>,
    learning_rate: f64,
    gain_importance: Vec<f64>,
    n_features: usize,
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl GbrtModel {
    pub fn fit(train: &Dataset, config: &GbrtConfig) -> Result<Self> {
        config.validate()?;
        let n = train.n_rows();
        if n < 2 * config.min_samples_leaf {
            return Err(DmlError::invalid(format!(
                "{} rows cannot satisfy min_samples_leaf {} on both sides of a split",
                n, config.min_samples_leaf
            )));
        }

        let base_score = train.targets().iter().sum::<f64>() / n as f64;
        let mut preds = vec![base_score; n];
        let mut residuals = vec![0.0; n];
        let mut gain_acc = vec![0.0; train.n_features()];
        let mut indices: Vec<usize> = Vec::with_capacity(n);
        let mut scratch: Vec<(f64, f64)> = Vec::with_capacity(n);
        let mut trees = Vec::with_capacity(config.n_estimators);

        for _ in 0..config.n_estimators {
            for i in 0..n {
                residuals[i] = train.targets()[i] - preds[i];
            }
            indices.clear();
            indices.extend(0..n);
            let tree = build_node(
                train,
                &residuals,
                &mut indices,
                0,
                config,
                &mut gain_acc,
                &mut scratch,
            );
            for i in 0..n {
                preds[i] += config.learning_rate * tree.evaluate(train.row(i));
            }
            trees.push(tree);
        }

        let total: f64 = gain_acc.iter().sum();
        if total > 0.0 {
            for g in &mut gain_acc {
                *g /= total;
            }
        }

        Ok(GbrtModel {
            base_score,
            trees,
            learning_rate: config.learning_rate,
            gain_importance: gain_acc,
            n_features: train.n_features(),
        })
    }

    /// Assemble a model from pre-built parts (external trees, test fixtures).
    pub fn from_parts(
        base_score: f64,
        trees: Vec<TreeNode>,
        learning_rate: f64,
        gain_importance: Vec<f64>,
        n_features: usize,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(DmlError::invalid("model needs at least one feature"));
        }
        if !base_score.is_finite() {
            return Err(DmlError::invalid("base_score must be finite"));
        }
        if gain_importance.len() != n_features {
            return Err(DmlError::invalid(format!(
                "gain_importance length {} does not match {} features",
                gain_importance.len(),
                n_features
            )));
        }
        if gain_importance.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(DmlError::invalid(
                "gain_importance entries must be finite and nonnegative",
            ));
        }
        Ok(GbrtModel {
            base_score,
            trees,
            learning_rate,
            gain_importance,
            n_features,
        })
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Normalized per-feature total squared-error reduction. All-zero when
    /// the ensemble never split.
    pub fn gain_importance(&self) -> &[f64] {
        &self.gain_importance
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(DmlError::invalid(format!(
                "expected {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(DmlError::invalid("non-finite feature value"));
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.learning_rate * t.evaluate(x))
                .sum::<f64>())
    }

    /// Shrunken output of each tree at `x` (base score excluded). Summing the
    /// entries and adding the base score reproduces `predict`.
    pub fn per_tree_contributions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self
            .trees
            .iter()
            .map(|t| self.learning_rate * t.evaluate(x))
            .collect())
    }

    /// Population variance of the per-tree contributions at `x`. Raw spread,
    /// no orientation applied; the gating network learns its sign.
    pub fn confidence(&self, x: &[f64]) -> Result<f64> {
        let contributions = self.per_tree_contributions(x)?;
        Ok(population_mean_variance(&contributions).1)
    }
}

fn build_node(
    data: &Dataset,
    residuals: &[f64],
    indices: &mut [usize],
    depth: usize,
    config: &GbrtConfig,
    gain_acc: &mut [f64],
    scratch: &mut Vec<(f64, f64)>,
) -> TreeNode {
    let leaf_value = |idx: &[usize]| {
        let sum: f64 = idx.iter().map(|&i| residuals[i]).sum();
        TreeNode::Leaf {
            value: sum / idx.len() as f64,
        }
    };

    if depth >= config.max_depth || indices.len() < 2 * config.min_samples_leaf {
        return leaf_value(indices);
    }
    let Some(split) = best_split(data, residuals, indices, config.min_samples_leaf, scratch)
    else {
        return leaf_value(indices);
    };

    gain_acc[split.feature] += split.gain;
    let mid = partition_in_place(indices, |i| data.row(i)[split.feature] <= split.threshold);
    let (left_idx, right_idx) = indices.split_at_mut(mid);
    let left = build_node(data, residuals, left_idx, depth + 1, config, gain_acc, scratch);
    let right = build_node(data, residuals, right_idx, depth + 1, config, gain_acc, scratch);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Exact search over every (feature, midpoint-threshold) candidate using
/// prefix sums of the sorted residuals. Returns `None` when no candidate has
/// strictly positive gain.
fn best_split(
    data: &Dataset,
    residuals: &[f64],
    indices: &[usize],
    min_samples_leaf: usize,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<SplitChoice> {
    let n = indices.len();
    let n_f = n as f64;
    let mut best: Option<SplitChoice> = None;

    for feature in 0..data.n_features() {
        scratch.clear();
        scratch.extend(indices.iter().map(|&i| (data.row(i)[feature], residuals[i])));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let total_sum: f64 = scratch.iter().map(|p| p.1).sum();
        let total_sq: f64 = scratch.iter().map(|p| p.1 * p.1).sum();
        let parent_sse = total_sq - total_sum * total_sum / n_f;

        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for k in 0..n - 1 {
            left_sum += scratch[k].1;
            left_sq += scratch[k].1 * scratch[k].1;

            let value = scratch[k].0;
            let next = scratch[k + 1].0;
            if value == next {
                continue;
            }
            let left_n = k + 1;
            let right_n = n - left_n;
            if left_n < min_samples_leaf || right_n < min_samples_leaf {
                continue;
            }

            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let left_sse = left_sq - left_sum * left_sum / left_n as f64;
            let right_sse = right_sq - right_sum * right_sum / right_n as f64;
            let gain = parent_sse - left_sse - right_sse;

            let mut threshold = 0.5 * (value + next);
            if threshold >= next {
                // midpoint rounded up onto the right value; pin to the left
                threshold = value;
            }

            if gain.is_finite() && gain > best.map_or(0.0, |b| b.gain) {
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn partition_in_place(indices: &mut [usize], mut goes_left: impl FnMut(usize) -> bool) -> usize {
    let mut store = 0;
    for i in 0..indices.len() {
        if goes_left(indices[i]) {
            indices.swap(store, i);
            store += 1;
        }
    }
    store
}
