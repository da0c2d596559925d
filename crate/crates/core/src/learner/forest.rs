//! Random forest regressor: bagged CART trees with per-split feature
//! subsampling; the prediction is the mean of the member trees.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, FeaturePool};
use super::{DecisionTree, LearnerError, PreparedMatrix, TreeHp};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestHp {
    pub n_trees: usize,
    pub max_depth: Option<u32>,
    pub min_samples_leaf: usize,
    pub feature_fraction: f64,
    pub bootstrap: bool,
}

impl Default for ForestHp {
    fn default() -> Self {
        ForestHp {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            feature_fraction: 1.0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub hp: ForestHp,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Each tree draws from its own `(seed, tree-index)` substream, so the
/// first `k` trees of a larger forest equal a `k`-tree forest trained
/// with the same seed.
pub fn train_random_forest(
    matrix: &PreparedMatrix,
    hp: ForestHp,
    seed: u64,
) -> Result<RandomForest, LearnerError> {
    if matrix.n_rows() == 0 {
        return Err(LearnerError::EmptyTraining);
    }
    if hp.n_trees < 1 {
        return Err(LearnerError::InvalidParams("n_trees must be >= 1".into()));
    }
    if !(hp.feature_fraction > 0.0 && hp.feature_fraction <= 1.0) {
        return Err(LearnerError::InvalidParams("feature_fraction must be in (0,1]".into()));
    }
    let n = matrix.n_rows();
    let tree_hp = TreeHp { max_depth: hp.max_depth, min_samples_leaf: hp.min_samples_leaf };
    let mut trees = Vec::with_capacity(hp.n_trees);
    for t in 0..hp.n_trees {
        let mut rng = stream_rng(seed, 10_000 + t as u64);
        let idx: Vec<usize> = if hp.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let tree = grow_tree(
            matrix,
            &matrix.targets,
            idx,
            tree_hp,
            FeaturePool::Sampled { fraction: hp.feature_fraction, rng: &mut rng },
        )?;
        trees.push(tree);
    }
    Ok(RandomForest { hp, trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn matrix(n: usize, seed: u64) -> PreparedMatrix {
        let mut rng = stream_rng(seed, 77);
        let mut data = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.gen_range(0.0..1.0);
            let b: f64 = rng.gen_range(0.0..1.0);
            data.extend([a, b]);
            targets.push((0.7 * a + 0.3 * b * b).clamp(0.0, 1.0));
        }
        PreparedMatrix {
            data,
            n_cols: 2,
            columns: vec!["a".into(), "b".into()],
            targets,
            target_min: 0.0,
            target_max: 1.0,
            excluded_unavailable: 0,
        }
    }

    #[test]
    fn prefix_of_a_larger_forest_is_the_smaller_forest() {
        let m = matrix(120, 1);
        let small = ForestHp { n_trees: 5, ..ForestHp::default() };
        let large = ForestHp { n_trees: 12, ..ForestHp::default() };
        let f5 = train_random_forest(&m, small, 9).unwrap();
        let f12 = train_random_forest(&m, large, 9).unwrap();
        assert_eq!(f5.trees, f12.trees[..5]);
    }

    #[test]
    fn no_bootstrap_full_features_degenerates_to_one_tree() {
        let m = matrix(80, 2);
        let hp = ForestHp { n_trees: 3, bootstrap: false, ..ForestHp::default() };
        let forest = train_random_forest(&m, hp, 4).unwrap();
        assert_eq!(forest.trees[0], forest.trees[1]);
        assert_eq!(forest.trees[1], forest.trees[2]);
    }

    #[test]
    fn prediction_is_the_tree_mean() {
        let m = matrix(100, 3);
        let forest =
            train_random_forest(&m, ForestHp { n_trees: 7, ..ForestHp::default() }, 5).unwrap();
        let row = [0.4, 0.6];
        let mean: f64 =
            forest.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>() / 7.0;
        assert!((forest.predict_row(&row) - mean).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        let m = matrix(20, 4);
        assert!(train_random_forest(&m, ForestHp { n_trees: 0, ..ForestHp::default() }, 0).is_err());
        assert!(train_random_forest(
            &m,
            ForestHp { feature_fraction: 0.0, ..ForestHp::default() },
            0
        )
        .is_err());
    }
}
