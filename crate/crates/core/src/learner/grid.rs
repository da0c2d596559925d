//! Exhaustive grid search with k-fold cross-validation, selecting the
//! hyperparameters with minimum mean fold PCD.
//!
//! Ensemble-size axes (forest tree counts, boosting stages) are
//! evaluated as prefixes of one larger ensemble per fold; because every
//! tree derives its randomness from `(seed, tree index)`, the first `k`
//! trees are bit-identical to a `k`-sized ensemble trained outright.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, FeaturePool};
use super::{
    evaluate_predictions, train_decision_tree, train_gbr, train_random_forest, ForestHp, GbrHp,
    LearnerError, PreparedMatrix, RegressionModel, TreeHp, Variant,
};
use crate::rng::stream_rng;

/// Depth lists serialize as plain integers with 0 meaning "unbounded",
/// so grids stay expressible in TOML (which has no null).
mod depth_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Option<u32>], s: S) -> Result<S::Ok, S::Error> {
        let ints: Vec<u32> = v.iter().map(|d| d.unwrap_or(0)).collect();
        ints.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<u32>>, D::Error> {
        let ints = Vec::<u32>::deserialize(d)?;
        Ok(ints.into_iter().map(|i| if i == 0 { None } else { Some(i) }).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtGrid {
    #[serde(with = "depth_list")]
    pub max_depth: Vec<Option<u32>>,
    pub min_samples_leaf: Vec<usize>,
}

impl Default for DtGrid {
    fn default() -> Self {
        DtGrid {
            max_depth: vec![Some(4), Some(8), Some(16), None],
            min_samples_leaf: vec![1, 5, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfGrid {
    pub n_trees: Vec<usize>,
    pub feature_fraction: Vec<f64>,
    #[serde(with = "depth_list")]
    pub max_depth: Vec<Option<u32>>,
    pub min_samples_leaf: Vec<usize>,
    pub bootstrap: bool,
}

impl Default for RfGrid {
    fn default() -> Self {
        RfGrid {
            n_trees: vec![50, 100, 200],
            feature_fraction: vec![0.33, 0.5, 1.0],
            max_depth: vec![Some(8), Some(16), None],
            min_samples_leaf: vec![1],
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrGrid {
    pub n_stages: Vec<usize>,
    pub learning_rate: Vec<f64>,
    #[serde(with = "depth_list")]
    pub max_depth: Vec<Option<u32>>,
    pub min_samples_leaf: Vec<usize>,
}

impl Default for GbrGrid {
    fn default() -> Self {
        GbrGrid {
            n_stages: vec![100, 300],
            learning_rate: vec![0.05, 0.1, 0.2],
            max_depth: vec![Some(2), Some(4), Some(6)],
            min_samples_leaf: vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum VariantGrid {
    DecisionTree(DtGrid),
    RandomForest(RfGrid),
    GradientBoosting(GbrGrid),
}

impl VariantGrid {
    pub fn variant(&self) -> Variant {
        match self {
            VariantGrid::DecisionTree(_) => Variant::DecisionTree,
            VariantGrid::RandomForest(_) => Variant::RandomForest,
            VariantGrid::GradientBoosting(_) => Variant::GradientBoosting,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum HpChoice {
    DecisionTree(TreeHp),
    RandomForest(ForestHp),
    GradientBoosting(GbrHp),
}

impl HpChoice {
    /// Ordering key in the grid's field order, for lexicographic
    /// tie-breaking; unbounded depth sorts last.
    fn key(&self) -> Vec<u64> {
        let depth_key = |d: Option<u32>| d.map(|v| v as u64).unwrap_or(u64::MAX);
        match self {
            HpChoice::DecisionTree(hp) => {
                vec![depth_key(hp.max_depth), hp.min_samples_leaf as u64]
            }
            HpChoice::RandomForest(hp) => vec![
                hp.n_trees as u64,
                (hp.feature_fraction * 1e9) as u64,
                depth_key(hp.max_depth),
                hp.min_samples_leaf as u64,
            ],
            HpChoice::GradientBoosting(hp) => vec![
                hp.n_stages as u64,
                (hp.learning_rate * 1e9) as u64,
                depth_key(hp.max_depth),
                hp.min_samples_leaf as u64,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub hp: HpChoice,
    pub mean_pcd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub variant: Variant,
    pub k_folds: usize,
    pub best: HpChoice,
    pub cells: Vec<GridCell>,
}

fn fold_splits(n: usize, k: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, 7));
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let lo = f * n / k;
        let hi = (f + 1) * n / k;
        let val: Vec<usize> = idx[lo..hi].to_vec();
        let train: Vec<usize> =
            idx[..lo].iter().chain(idx[hi..].iter()).copied().collect();
        folds.push((train, val));
    }
    folds
}

fn fold_pcd(
    val: &PreparedMatrix,
    predictions: &[f64],
) -> Result<f64, LearnerError> {
    Ok(evaluate_predictions(&val.targets, predictions, val.target_min, val.target_max)?.pcd)
}

fn dedup<T: PartialEq + Copy>(values: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for &v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

pub fn grid_search(
    matrix: &PreparedMatrix,
    grid: &VariantGrid,
    k_folds: usize,
    seed: u64,
) -> Result<GridSearchReport, LearnerError> {
    if k_folds < 2 {
        return Err(LearnerError::InvalidParams("k_folds must be >= 2".into()));
    }
    if matrix.n_rows() < k_folds {
        return Err(LearnerError::NotEnoughRows { needed: k_folds, got: matrix.n_rows() });
    }
    let folds = fold_splits(matrix.n_rows(), k_folds, seed);
    let prepared: Vec<(PreparedMatrix, PreparedMatrix)> = folds
        .iter()
        .map(|(train, val)| (matrix.subset(train), matrix.subset(val)))
        .collect();

    let mut cells: Vec<GridCell> = Vec::new();
    match grid {
        VariantGrid::DecisionTree(g) => {
            let depths = dedup(&g.max_depth);
            let leaves = dedup(&g.min_samples_leaf);
            if depths.is_empty() || leaves.is_empty() {
                return Err(LearnerError::EmptyGrid);
            }
            for &max_depth in &depths {
                for &min_samples_leaf in &leaves {
                    let hp = TreeHp { max_depth, min_samples_leaf };
                    let mut total = 0.0;
                    for (train, val) in &prepared {
                        let tree = train_decision_tree(train, hp, seed)?;
                        let preds: Vec<f64> =
                            (0..val.n_rows()).map(|i| tree.predict_row(val.row(i))).collect();
                        total += fold_pcd(val, &preds)?;
                    }
                    cells.push(GridCell {
                        hp: HpChoice::DecisionTree(hp),
                        mean_pcd: total / k_folds as f64,
                    });
                }
            }
        }
        VariantGrid::RandomForest(g) => {
            let mut n_trees = dedup(&g.n_trees);
            n_trees.sort_unstable();
            let fractions = dedup(&g.feature_fraction);
            let depths = dedup(&g.max_depth);
            let leaves = dedup(&g.min_samples_leaf);
            if n_trees.is_empty() || fractions.is_empty() || depths.is_empty() || leaves.is_empty()
            {
                return Err(LearnerError::EmptyGrid);
            }
            let max_nt = *n_trees.last().unwrap();
            for &feature_fraction in &fractions {
                for &max_depth in &depths {
                    for &min_samples_leaf in &leaves {
                        // One max-size forest per fold; tree counts are
                        // scored as prefixes.
                        let mut totals = vec![0.0; n_trees.len()];
                        for (train, val) in &prepared {
                            let forest = train_random_forest(
                                train,
                                ForestHp {
                                    n_trees: max_nt,
                                    max_depth,
                                    min_samples_leaf,
                                    feature_fraction,
                                    bootstrap: g.bootstrap,
                                },
                                seed,
                            )?;
                            let mut acc = vec![0.0; val.n_rows()];
                            let mut checkpoint = 0;
                            for (t, tree) in forest.trees.iter().enumerate() {
                                for (i, slot) in acc.iter_mut().enumerate() {
                                    *slot += tree.predict_row(val.row(i));
                                }
                                if checkpoint < n_trees.len() && t + 1 == n_trees[checkpoint] {
                                    let preds: Vec<f64> =
                                        acc.iter().map(|&s| s / (t + 1) as f64).collect();
                                    totals[checkpoint] += fold_pcd(val, &preds)?;
                                    checkpoint += 1;
                                }
                            }
                        }
                        for (c, &nt) in n_trees.iter().enumerate() {
                            cells.push(GridCell {
                                hp: HpChoice::RandomForest(ForestHp {
                                    n_trees: nt,
                                    max_depth,
                                    min_samples_leaf,
                                    feature_fraction,
                                    bootstrap: g.bootstrap,
                                }),
                                mean_pcd: totals[c] / k_folds as f64,
                            });
                        }
                    }
                }
            }
        }
        VariantGrid::GradientBoosting(g) => {
            let mut stages = dedup(&g.n_stages);
            stages.sort_unstable();
            let rates = dedup(&g.learning_rate);
            let depths = dedup(&g.max_depth);
            let leaves = dedup(&g.min_samples_leaf);
            if stages.is_empty() || rates.is_empty() || depths.is_empty() || leaves.is_empty() {
                return Err(LearnerError::EmptyGrid);
            }
            let max_stages = *stages.last().unwrap();
            for &learning_rate in &rates {
                for &max_depth in &depths {
                    for &min_samples_leaf in &leaves {
                        let tree_hp = TreeHp { max_depth, min_samples_leaf };
                        let mut totals = vec![0.0; stages.len()];
                        for (train, val) in &prepared {
                            let n = train.n_rows();
                            let init = train.targets.iter().sum::<f64>() / n as f64;
                            let idx: Vec<usize> = (0..n).collect();
                            let mut residuals: Vec<f64> =
                                train.targets.iter().map(|&y| y - init).collect();
                            let mut acc = vec![0.0; val.n_rows()];
                            let mut checkpoint = 0;
                            for s in 0..max_stages {
                                let tree = grow_tree(
                                    train,
                                    &residuals,
                                    idx.clone(),
                                    tree_hp,
                                    FeaturePool::All,
                                )?;
                                for (i, r) in residuals.iter_mut().enumerate() {
                                    *r -= learning_rate * tree.predict_row(train.row(i));
                                }
                                for (i, slot) in acc.iter_mut().enumerate() {
                                    *slot += tree.predict_row(val.row(i));
                                }
                                if checkpoint < stages.len() && s + 1 == stages[checkpoint] {
                                    let preds: Vec<f64> =
                                        acc.iter().map(|&a| init + learning_rate * a).collect();
                                    totals[checkpoint] += fold_pcd(val, &preds)?;
                                    checkpoint += 1;
                                }
                            }
                        }
                        for (c, &ns) in stages.iter().enumerate() {
                            cells.push(GridCell {
                                hp: HpChoice::GradientBoosting(GbrHp {
                                    n_stages: ns,
                                    learning_rate,
                                    max_depth,
                                    min_samples_leaf,
                                }),
                                mean_pcd: totals[c] / k_folds as f64,
                            });
                        }
                    }
                }
            }
        }
    }

    let best = cells
        .iter()
        .min_by(|a, b| {
            a.mean_pcd
                .partial_cmp(&b.mean_pcd)
                .unwrap()
                .then_with(|| a.hp.key().cmp(&b.hp.key()))
        })
        .ok_or(LearnerError::EmptyGrid)?
        .hp;
    Ok(GridSearchReport { variant: grid.variant(), k_folds, best, cells })
}

/// Trains the chosen hyperparameters on the full matrix.
pub fn train_with_choice(
    matrix: &PreparedMatrix,
    choice: HpChoice,
    seed: u64,
) -> Result<RegressionModel, LearnerError> {
    Ok(match choice {
        HpChoice::DecisionTree(hp) => RegressionModel::DecisionTree {
            hp,
            tree: train_decision_tree(matrix, hp, seed)?,
        },
        HpChoice::RandomForest(hp) => {
            RegressionModel::RandomForest(train_random_forest(matrix, hp, seed)?)
        }
        HpChoice::GradientBoosting(hp) => {
            RegressionModel::GradientBoosting(train_gbr(matrix, hp, seed)?)
        }
    })
}
