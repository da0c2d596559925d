//! Gradient boosting under squared loss: a constant initial prediction
//! (the target mean) plus stagewise CART fits to the current residuals.

use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, FeaturePool};
use super::{DecisionTree, LearnerError, PreparedMatrix, TreeHp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbrHp {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: Option<u32>,
    pub min_samples_leaf: usize,
}

impl Default for GbrHp {
    fn default() -> Self {
        GbrHp { n_stages: 300, learning_rate: 0.1, max_depth: Some(6), min_samples_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub hp: GbrHp,
    /// Mean of the training targets.
    pub init: f64,
    pub trees: Vec<DecisionTree>,
}

impl GradientBoosting {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.init
            + self.hp.learning_rate
                * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    /// Prediction using only the first `stages` trees.
    pub fn predict_row_prefix(&self, row: &[f64], stages: usize) -> f64 {
        self.init
            + self.hp.learning_rate
                * self.trees[..stages.min(self.trees.len())]
                    .iter()
                    .map(|t| t.predict_row(row))
                    .sum::<f64>()
    }
}

pub fn train_gbr(
    matrix: &PreparedMatrix,
    hp: GbrHp,
    seed: u64,
) -> Result<GradientBoosting, LearnerError> {
    let _ = seed; // stages are deterministic; kept for interface symmetry
    if matrix.n_rows() == 0 {
        return Err(LearnerError::EmptyTraining);
    }
    if hp.n_stages < 1 {
        return Err(LearnerError::InvalidParams("n_stages must be >= 1".into()));
    }
    if hp.learning_rate < 0.0 {
        return Err(LearnerError::InvalidParams("learning_rate must be >= 0".into()));
    }
    let n = matrix.n_rows();
    let init = matrix.targets.iter().sum::<f64>() / n as f64;
    let tree_hp = TreeHp { max_depth: hp.max_depth, min_samples_leaf: hp.min_samples_leaf };
    let idx: Vec<usize> = (0..n).collect();

    let mut residuals: Vec<f64> = matrix.targets.iter().map(|&y| y - init).collect();
    let mut trees = Vec::with_capacity(hp.n_stages);
    let mut prev_mse = residuals.iter().map(|r| r * r).sum::<f64>() / n as f64;
    for _ in 0..hp.n_stages {
        let tree = grow_tree(matrix, &residuals, idx.clone(), tree_hp, FeaturePool::All)?;
        for (i, r) in residuals.iter_mut().enumerate() {
            *r -= hp.learning_rate * tree.predict_row(matrix.row(i));
        }
        let mse = residuals.iter().map(|r| r * r).sum::<f64>() / n as f64;
        debug_assert!(
            mse <= prev_mse + 1e-12,
            "training MSE increased across a boosting stage"
        );
        prev_mse = mse;
        trees.push(tree);
    }
    Ok(GradientBoosting { hp, init, trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::stream_rng;

    fn matrix(n: usize, seed: u64) -> PreparedMatrix {
        let mut rng = stream_rng(seed, 78);
        let mut data = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.gen_range(0.0..1.0);
            let b: f64 = rng.gen_range(0.0..1.0);
            data.extend([a, b]);
            targets.push(((a - 0.5).abs() + 0.2 * b).clamp(0.0, 1.0));
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

    fn train_mse(model: &GradientBoosting, m: &PreparedMatrix, stages: usize) -> f64 {
        (0..m.n_rows())
            .map(|i| {
                let e = m.targets[i] - model.predict_row_prefix(m.row(i), stages);
                e * e
            })
            .sum::<f64>()
            / m.n_rows() as f64
    }

    #[test]
    fn training_mse_never_increases_over_stages() {
        let m = matrix(150, 1);
        let hp = GbrHp { n_stages: 40, learning_rate: 0.2, max_depth: Some(3), min_samples_leaf: 1 };
        let model = train_gbr(&m, hp, 0).unwrap();
        let mut prev = f64::INFINITY;
        for s in 0..=40 {
            let mse = train_mse(&model, &m, s);
            assert!(mse <= prev + 1e-12, "stage {s} regressed");
            prev = mse;
        }
        // And it actually learned something.
        assert!(train_mse(&model, &m, 40) < 0.2 * train_mse(&model, &m, 0));
    }

    #[test]
    fn zero_learning_rate_predicts_the_mean() {
        let m = matrix(60, 2);
        let hp = GbrHp { n_stages: 5, learning_rate: 0.0, ..GbrHp::default() };
        let model = train_gbr(&m, hp, 0).unwrap();
        let mean = m.targets.iter().sum::<f64>() / m.n_rows() as f64;
        assert!((model.predict_row(&[0.3, 0.3]) - mean).abs() < 1e-12);
    }

    #[test]
    fn full_prefix_equals_full_prediction() {
        let m = matrix(80, 3);
        let model = train_gbr(&m, GbrHp { n_stages: 12, ..GbrHp::default() }, 0).unwrap();
        let row = [0.25, 0.75];
        assert_eq!(model.predict_row(&row), model.predict_row_prefix(&row, 12));
        assert_eq!(model.predict_row(&row), model.predict_row_prefix(&row, 99));
    }

    #[test]
    fn rejects_bad_params() {
        let m = matrix(20, 4);
        assert!(train_gbr(&m, GbrHp { n_stages: 0, ..GbrHp::default() }, 0).is_err());
        assert!(train_gbr(&m, GbrHp { learning_rate: -0.1, ..GbrHp::default() }, 0).is_err());
    }
}
