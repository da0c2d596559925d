//! CART regression tree: greedy binary splits minimizing the summed
//! squared deviation of the children, leaves predicting the mean target.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LearnerError, PreparedMatrix};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeHp {
    /// `None` grows until pure or exhausted.
    pub max_depth: Option<u32>,
    pub min_samples_leaf: usize,
}

impl Default for TreeHp {
    fn default() -> Self {
        TreeHp { max_depth: None, min_samples_leaf: 1 }
    }
}

/// Arena node: `feature == None` marks a leaf predicting `value`;
/// otherwise rows with `row[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: Option<usize>,
    pub threshold: f64,
    pub value: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while let Some(feature) = node.feature {
            node = if row[feature] <= node.threshold {
                &self.nodes[node.left]
            } else {
                &self.nodes[node.right]
            };
        }
        node.value
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// How split candidates pick their feature pool.
pub(crate) enum FeaturePool<'a> {
    All,
    /// Per-split random subset of `ceil(fraction * n_features)` features.
    Sampled { fraction: f64, rng: &'a mut ChaCha8Rng },
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    children_sse: f64,
}

fn node_stats(targets: &[f64], idx: &[usize]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &i in idx {
        sum += targets[i];
        sum_sq += targets[i] * targets[i];
    }
    (sum, sum_sq)
}

fn best_split(
    matrix: &PreparedMatrix,
    targets: &[f64],
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<BestSplit> {
    let n = idx.len();
    let mut best: Option<BestSplit> = None;
    for &feature in features {
        scratch.clear();
        scratch.extend(idx.iter().map(|&i| (matrix.row(i)[feature], targets[i])));
        scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));

        let total_sum: f64 = scratch.iter().map(|p| p.1).sum();
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        let total_sq: f64 = scratch.iter().map(|p| p.1 * p.1).sum();
        for i in 0..n - 1 {
            left_sum += scratch[i].1;
            left_sq += scratch[i].1 * scratch[i].1;
            let l = i + 1;
            let r = n - l;
            if l < min_leaf || r < min_leaf {
                continue;
            }
            let (v_left, v_right) = (scratch[i].0, scratch[i + 1].0);
            if v_left >= v_right {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let sse = (left_sq - left_sum * left_sum / l as f64)
                + (right_sq - right_sum * right_sum / r as f64);
            if best.as_ref().map_or(true, |b| sse < b.children_sse - 1e-12) {
                let mid = (v_left + v_right) / 2.0;
                // Adjacent floats can round the midpoint onto the right
                // value; fall back to the left value so `<=` still splits.
                let threshold = if mid < v_right { mid } else { v_left };
                best = Some(BestSplit { feature, threshold, children_sse: sse });
            }
        }
    }
    best
}

pub(crate) fn grow_tree(
    matrix: &PreparedMatrix,
    targets: &[f64],
    idx: Vec<usize>,
    hp: TreeHp,
    mut pool: FeaturePool<'_>,
) -> Result<DecisionTree, LearnerError> {
    if idx.is_empty() {
        return Err(LearnerError::EmptyTraining);
    }
    let all_features: Vec<usize> = (0..matrix.n_cols).collect();
    let subset_size = match &pool {
        FeaturePool::All => matrix.n_cols,
        FeaturePool::Sampled { fraction, .. } => {
            ((fraction * matrix.n_cols as f64).ceil() as usize).clamp(1, matrix.n_cols)
        }
    };

    let mut nodes = Vec::new();
    // (node slot, indices, depth)
    let mut stack: Vec<(usize, Vec<usize>, u32)> = Vec::new();
    nodes.push(TreeNode { feature: None, threshold: 0.0, value: 0.0, left: 0, right: 0 });
    stack.push((0, idx, 0));
    let mut scratch = Vec::new();

    while let Some((slot, idx, depth)) = stack.pop() {
        let (sum, sum_sq) = node_stats(targets, &idx);
        let n = idx.len() as f64;
        let mean = sum / n;
        nodes[slot].value = mean;
        let node_sse = sum_sq - sum * sum / n;

        let depth_ok = hp.max_depth.map_or(true, |d| depth < d);
        if !depth_ok || idx.len() < 2 * hp.min_samples_leaf || node_sse <= 1e-12 {
            continue;
        }

        let features: Vec<usize> = match &mut pool {
            FeaturePool::All => all_features.clone(),
            FeaturePool::Sampled { rng, .. } => {
                let mut chosen: Vec<usize> =
                    all_features.choose_multiple(rng, subset_size).copied().collect();
                chosen.sort_unstable();
                chosen
            }
        };

        let split = match best_split(matrix, targets, &idx, &features, hp.min_samples_leaf, &mut scratch)
        {
            Some(s) if node_sse - s.children_sse > 1e-12 => s,
            _ => continue,
        };

        let (mut left_idx, mut right_idx) = (Vec::new(), Vec::new());
        for &i in &idx {
            if matrix.row(i)[split.feature] <= split.threshold {
                left_idx.push(i);
            } else {
                right_idx.push(i);
            }
        }
        debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());

        let left_slot = nodes.len();
        nodes.push(TreeNode { feature: None, threshold: 0.0, value: 0.0, left: 0, right: 0 });
        let right_slot = nodes.len();
        nodes.push(TreeNode { feature: None, threshold: 0.0, value: 0.0, left: 0, right: 0 });
        nodes[slot].feature = Some(split.feature);
        nodes[slot].threshold = split.threshold;
        nodes[slot].left = left_slot;
        nodes[slot].right = right_slot;
        // Right pushed first so the left branch grows first; with a
        // sampled pool this fixes the rng consumption order.
        stack.push((right_slot, right_idx, depth + 1));
        stack.push((left_slot, left_idx, depth + 1));
    }
    Ok(DecisionTree { nodes })
}

/// Trains a single CART tree on the full matrix. The seed only matters
/// where randomness enters split choice; plain trees are deterministic.
pub fn train_decision_tree(
    matrix: &PreparedMatrix,
    hp: TreeHp,
    seed: u64,
) -> Result<DecisionTree, LearnerError> {
    let _ = stream_rng(seed, 5);
    if matrix.n_rows() == 0 {
        return Err(LearnerError::EmptyTraining);
    }
    grow_tree(
        matrix,
        &matrix.targets,
        (0..matrix.n_rows()).collect(),
        hp,
        FeaturePool::All,
    )
}
