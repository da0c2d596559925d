//! Feature preprocessing, the three regression models (decision tree,
//! random forest, gradient boosting), grid-search tuning, and the
//! evaluation metrics (PCD, MSE, MAE).

mod forest;
mod gbr;
mod grid;
mod metrics;
mod model;
mod tree;

pub use forest::{train_random_forest, ForestHp, RandomForest};
pub use gbr::{train_gbr, GbrHp, GradientBoosting};
pub use grid::{
    grid_search, train_with_choice, DtGrid, GbrGrid, GridCell, GridSearchReport, HpChoice, RfGrid,
    VariantGrid,
};
pub use metrics::{evaluate, evaluate_predictions, split_indices, MetricsReport};
pub use model::{load_model, save_model, RegressionModel, TrainedModel, Variant, MODEL_FORMAT_VERSION};
pub use tree::{train_decision_tree, DecisionTree, TreeHp};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::SharingExperience;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("need at least {needed} rows with finite targets, got {got}")]
    NotEnoughRows { needed: usize, got: usize },
    #[error("empty training set")]
    EmptyTraining,
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("schema mismatch: unknown feature {0}")]
    SchemaMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub const NUMERIC_FEATURES: [&str; 11] = [
    "req_latitude",
    "req_longitude",
    "instruction_count_mi",
    "message_size_mb",
    "edge_latitude",
    "edge_longitude",
    "cpi",
    "clock_rate_ghz",
    "ram_gb",
    "cores",
    "availability_pct",
];

pub const CATEGORICAL_FEATURES: [&str; 5] =
    ["req_type", "edge_type", "edge_mode", "edge_mobility", "comm_tech"];

/// One training/prediction row before encoding, detached from any
/// particular dataset so allocation-time rows encode the same way.
#[derive(Debug, Clone)]
pub struct FeatureInput {
    pub numerics: [f64; 11],
    pub categoricals: [String; 5],
}

impl From<&SharingExperience> for FeatureInput {
    fn from(e: &SharingExperience) -> Self {
        FeatureInput {
            numerics: [
                e.req_latitude,
                e.req_longitude,
                e.instruction_count_mi,
                e.message_size_mb,
                e.edge_latitude,
                e.edge_longitude,
                e.cpi,
                e.clock_rate_ghz,
                e.ram_gb,
                e.cores as f64,
                e.availability_pct,
            ],
            categoricals: [
                e.req_type.as_str().to_string(),
                e.edge_type.as_str().to_string(),
                e.edge_mode.to_string(),
                e.edge_mobility.to_string(),
                e.tech.to_string(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericFeature {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalFeature {
    pub name: String,
    pub vocabulary: Vec<String>,
}

/// Fitted preprocessing state: numeric min/max, categorical vocabularies,
/// and the target scaling needed to invert predictions back to seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub numerics: Vec<NumericFeature>,
    pub categoricals: Vec<CategoricalFeature>,
    /// Constant numeric features dropped at fit time.
    pub dropped: Vec<String>,
    pub target_min: f64,
    pub target_max: f64,
}

impl FeatureSchema {
    pub fn n_columns(&self) -> usize {
        self.numerics.len() + self.categoricals.iter().map(|c| c.vocabulary.len()).sum::<usize>()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.numerics.iter().map(|f| f.name.clone()).collect();
        for cat in &self.categoricals {
            for value in &cat.vocabulary {
                names.push(format!("{}={}", cat.name, value));
            }
        }
        names
    }

    fn numeric_index(name: &str) -> Result<usize, LearnerError> {
        NUMERIC_FEATURES
            .iter()
            .position(|&n| n == name)
            .ok_or_else(|| LearnerError::SchemaMismatch(name.to_string()))
    }

    fn categorical_index(name: &str) -> Result<usize, LearnerError> {
        CATEGORICAL_FEATURES
            .iter()
            .position(|&n| n == name)
            .ok_or_else(|| LearnerError::SchemaMismatch(name.to_string()))
    }

    /// Encodes one row: numerics min-max scaled and clamped to [0,1],
    /// categoricals one-hot with unseen values as all-zeros.
    pub fn encode(&self, input: &FeatureInput) -> Result<Vec<f64>, LearnerError> {
        let mut row = Vec::with_capacity(self.n_columns());
        for feature in &self.numerics {
            let value = input.numerics[Self::numeric_index(&feature.name)?];
            let scaled = (value - feature.min) / (feature.max - feature.min);
            row.push(scaled.clamp(0.0, 1.0));
        }
        for cat in &self.categoricals {
            let value = &input.categoricals[Self::categorical_index(&cat.name)?];
            for item in &cat.vocabulary {
                row.push(if item == value { 1.0 } else { 0.0 });
            }
        }
        Ok(row)
    }

    pub fn scale_target(&self, seconds: f64) -> f64 {
        (seconds - self.target_min) / (self.target_max - self.target_min)
    }

    pub fn unscale_target(&self, scaled: f64) -> f64 {
        scaled * (self.target_max - self.target_min) + self.target_min
    }
}

/// Fits numeric ranges, vocabularies, and target scaling from training
/// rows with finite targets. Constant numerics are dropped and recorded.
pub fn fit_preprocessor(rows: &[SharingExperience]) -> Result<FeatureSchema, LearnerError> {
    let finite: Vec<&SharingExperience> =
        rows.iter().filter(|e| e.observed_rt.is_available()).collect();
    if finite.len() < 2 {
        return Err(LearnerError::NotEnoughRows { needed: 2, got: finite.len() });
    }
    let inputs: Vec<FeatureInput> = finite.iter().map(|e| FeatureInput::from(*e)).collect();

    let mut numerics = Vec::new();
    let mut dropped = Vec::new();
    for (i, &name) in NUMERIC_FEATURES.iter().enumerate() {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for input in &inputs {
            min = min.min(input.numerics[i]);
            max = max.max(input.numerics[i]);
        }
        if min < max {
            numerics.push(NumericFeature { name: name.to_string(), min, max });
        } else {
            dropped.push(name.to_string());
        }
    }

    let mut categoricals = Vec::new();
    for (i, &name) in CATEGORICAL_FEATURES.iter().enumerate() {
        let mut vocabulary: Vec<String> =
            inputs.iter().map(|input| input.categoricals[i].clone()).collect();
        vocabulary.sort();
        vocabulary.dedup();
        categoricals.push(CategoricalFeature { name: name.to_string(), vocabulary });
    }

    let mut target_min = f64::INFINITY;
    let mut target_max = f64::NEG_INFINITY;
    for e in &finite {
        let rt = e.observed_rt.seconds().expect("finite rows only");
        target_min = target_min.min(rt);
        target_max = target_max.max(rt);
    }
    if !(target_min < target_max) {
        return Err(LearnerError::InvalidParams("constant training target".into()));
    }

    Ok(FeatureSchema { numerics, categoricals, dropped, target_min, target_max })
}

/// Encoded row-major matrix plus scaled targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedMatrix {
    pub data: Vec<f64>,
    pub n_cols: usize,
    pub columns: Vec<String>,
    /// Targets scaled with the schema's target range.
    pub targets: Vec<f64>,
    pub target_min: f64,
    pub target_max: f64,
    /// Rows dropped because their outcome was Unavailable.
    pub excluded_unavailable: usize,
}

impl PreparedMatrix {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn unscale_target(&self, scaled: f64) -> f64 {
        scaled * (self.target_max - self.target_min) + self.target_min
    }

    pub fn subset(&self, indices: &[usize]) -> PreparedMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        PreparedMatrix {
            data,
            n_cols: self.n_cols,
            columns: self.columns.clone(),
            targets,
            target_min: self.target_min,
            target_max: self.target_max,
            excluded_unavailable: 0,
        }
    }
}

/// Encodes rows with a fitted schema, excluding Unavailable outcomes
/// (their count is reported on the matrix).
pub fn transform(
    schema: &FeatureSchema,
    rows: &[SharingExperience],
) -> Result<PreparedMatrix, LearnerError> {
    let n_cols = schema.n_columns();
    let mut data = Vec::new();
    let mut targets = Vec::new();
    let mut excluded = 0;
    for e in rows {
        match e.observed_rt.seconds() {
            Some(rt) => {
                data.extend(schema.encode(&FeatureInput::from(e))?);
                targets.push(schema.scale_target(rt));
            }
            None => excluded += 1,
        }
    }
    Ok(PreparedMatrix {
        data,
        n_cols,
        columns: schema.column_names(),
        targets,
        target_min: schema.target_min,
        target_max: schema.target_max,
        excluded_unavailable: excluded,
    })
}
