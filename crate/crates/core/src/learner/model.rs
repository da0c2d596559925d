//! Trained-model container and its versioned JSON file format.
//!
//! A model file is a single JSON object:
//! - `format_version`: integer, currently 1
//! - `variant`: `"decision_tree" | "random_forest" | "gradient_boosting"`
//! - `schema`: the fitted preprocessing state — `numerics` (name/min/max),
//!   `categoricals` (name/vocabulary), `dropped`, `target_min`, `target_max`
//! - `model`: variant-tagged payload; trees are node arenas where each
//!   node carries `feature` (null for leaves), `threshold`, `value`,
//!   `left`, `right`, and ensembles carry their hyperparameters plus
//!   (for gradient boosting) the initial constant

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DecisionTree, FeatureSchema, GradientBoosting, LearnerError, RandomForest, TreeHp,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    DecisionTree,
    RandomForest,
    GradientBoosting,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::DecisionTree => "dt",
            Variant::RandomForest => "rf",
            Variant::GradientBoosting => "gbr",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionModel {
    DecisionTree { hp: TreeHp, tree: DecisionTree },
    RandomForest(RandomForest),
    GradientBoosting(GradientBoosting),
}

impl RegressionModel {
    pub fn variant(&self) -> Variant {
        match self {
            RegressionModel::DecisionTree { .. } => Variant::DecisionTree,
            RegressionModel::RandomForest(_) => Variant::RandomForest,
            RegressionModel::GradientBoosting(_) => Variant::GradientBoosting,
        }
    }

    /// Prediction in scaled-target space.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            RegressionModel::DecisionTree { tree, .. } => tree.predict_row(row),
            RegressionModel::RandomForest(forest) => forest.predict_row(row),
            RegressionModel::GradientBoosting(gbr) => gbr.predict_row(row),
        }
    }
}

/// A model plus the schema it was trained with; the unit of persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub variant: Variant,
    pub schema: FeatureSchema,
    pub model: RegressionModel,
}

impl TrainedModel {
    pub fn new(schema: FeatureSchema, model: RegressionModel) -> Self {
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            variant: model.variant(),
            schema,
            model,
        }
    }

    /// Prediction inverted back to seconds.
    pub fn predict_seconds(&self, row: &[f64]) -> f64 {
        self.schema.unscale_target(self.model.predict_row(row))
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<(), LearnerError> {
    let json = serde_json::to_string_pretty(model)?;
    std::fs::write(path.as_ref(), json)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, LearnerError> {
    let json = std::fs::read_to_string(path.as_ref())?;
    let model: TrainedModel = serde_json::from_str(&json)?;
    if model.format_version != MODEL_FORMAT_VERSION {
        return Err(LearnerError::InvalidParams(format!(
            "unsupported model format version {}",
            model.format_version
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GeoBox;
    use crate::learner::{fit_preprocessor, train_gbr, transform, GbrHp};
    use crate::oracle::{generate_experiences, ExperienceParams};

    fn trained() -> TrainedModel {
        let devices =
            crate::dataset::generate_synthetic_devices(100, 40, GeoBox::default(), 6).unwrap();
        let params = ExperienceParams { n: 300, ..ExperienceParams::default() };
        let rows = generate_experiences(&devices, &params, 1).unwrap();
        let schema = fit_preprocessor(&rows).unwrap();
        let matrix = transform(&schema, &rows).unwrap();
        let model =
            train_gbr(&matrix, GbrHp { n_stages: 10, ..GbrHp::default() }, 0).unwrap();
        TrainedModel::new(schema, RegressionModel::GradientBoosting(model))
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let model = trained();
        let file = tempfile::NamedTempFile::new().unwrap();
        save_model(file.path(), &model).unwrap();
        let back = load_model(file.path()).unwrap();
        assert_eq!(model, back);
        let row: Vec<f64> = vec![0.5; model.schema.n_columns()];
        assert_eq!(model.predict_seconds(&row), back.predict_seconds(&row));
    }

    #[test]
    fn unknown_format_version_is_rejected() {
        let model = trained();
        let mut value = serde_json::to_value(&model).unwrap();
        value["format_version"] = serde_json::json!(99);
        let file = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(file.path(), serde_json::to_string(&value).unwrap()).unwrap();
        assert!(load_model(file.path()).is_err());
    }

    #[test]
    fn predict_seconds_inverts_target_scaling() {
        let model = trained();
        let row: Vec<f64> = vec![0.2; model.schema.n_columns()];
        let scaled = model.model.predict_row(&row);
        assert!((model.predict_seconds(&row) - model.schema.unscale_target(scaled)).abs() < 1e-12);
    }
}
