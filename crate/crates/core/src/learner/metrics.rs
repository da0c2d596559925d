//! Evaluation metrics: MSE/MAE on the scaled targets, PCD (symmetric
//! percentage error) on raw seconds, and the seeded train/test split.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{LearnerError, PreparedMatrix, RegressionModel};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    /// Mean squared / absolute error on the scaled targets.
    pub mse: f64,
    pub mae: f64,
    /// The same errors in raw seconds.
    pub raw_mse: f64,
    pub raw_mae: f64,
    /// Mean per-sample percentage change difference, on raw seconds.
    pub pcd: f64,
    /// The unnormalized sum form of the same quantity.
    pub pcd_sum: f64,
    pub per_sample_pcd: Vec<f64>,
}

/// PCD of one sample: `100 * |y - yhat| / ((y + yhat) / 2)`, defined as
/// 0 when both values are 0.
fn pcd_sample(y: f64, yhat: f64) -> f64 {
    let denom = (y + yhat) / 2.0;
    if denom == 0.0 {
        0.0
    } else {
        100.0 * (y - yhat).abs() / denom
    }
}

/// Metrics from already-computed scaled predictions.
pub fn evaluate_predictions(
    targets_scaled: &[f64],
    predictions_scaled: &[f64],
    target_min: f64,
    target_max: f64,
) -> Result<MetricsReport, LearnerError> {
    let n = targets_scaled.len();
    if n == 0 || predictions_scaled.len() != n {
        return Err(LearnerError::EmptyTraining);
    }
    let span = target_max - target_min;
    let mut mse = 0.0;
    let mut mae = 0.0;
    let mut per_sample_pcd = Vec::with_capacity(n);
    for (&y, &yhat) in targets_scaled.iter().zip(predictions_scaled) {
        let err = y - yhat;
        mse += err * err;
        mae += err.abs();
        let y_raw = y * span + target_min;
        let yhat_raw = yhat * span + target_min;
        per_sample_pcd.push(pcd_sample(y_raw, yhat_raw));
    }
    mse /= n as f64;
    mae /= n as f64;
    let pcd_sum: f64 = per_sample_pcd.iter().sum();
    Ok(MetricsReport {
        n,
        mse,
        mae,
        raw_mse: mse * span * span,
        raw_mae: mae * span,
        pcd: pcd_sum / n as f64,
        pcd_sum,
        per_sample_pcd,
    })
}

pub fn evaluate(
    model: &RegressionModel,
    matrix: &PreparedMatrix,
) -> Result<MetricsReport, LearnerError> {
    let predictions: Vec<f64> =
        (0..matrix.n_rows()).map(|i| model.predict_row(matrix.row(i))).collect();
    evaluate_predictions(&matrix.targets, &predictions, matrix.target_min, matrix.target_max)
}

/// Seeded shuffle-then-split over `0..n`; the train side gets
/// `round(fraction * n)` indices, the sides are disjoint and exhaustive.
pub fn split_indices(
    n: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), LearnerError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(LearnerError::InvalidParams("split fraction must be in (0,1)".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, 6));
    let n_train = (fraction * n as f64).round() as usize;
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_single_sample() {
        // y=1.0, yhat=1.5: pcd = 100*0.5/1.25 = 40, mse 0.25, mae 0.5.
        let r = evaluate_predictions(&[1.0], &[1.5], 0.0, 1.0).unwrap();
        assert!((r.pcd - 40.0).abs() < 1e-9);
        assert!((r.mse - 0.25).abs() < 1e-9);
        assert!((r.mae - 0.5).abs() < 1e-9);
        assert_eq!(r.per_sample_pcd, vec![r.pcd]);
        assert!((r.pcd_sum - 40.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions_are_all_zero() {
        let y = [0.2, 0.5, 0.9];
        let r = evaluate_predictions(&y, &y, 1.0, 3.0).unwrap();
        assert!(r.mse.abs() < 1e-9 && r.mae.abs() < 1e-9 && r.pcd.abs() < 1e-9);
        assert!(r.per_sample_pcd.iter().all(|p| p.abs() < 1e-9));
    }

    #[test]
    fn both_zero_sample_counts_as_zero_pcd() {
        let r = evaluate_predictions(&[0.0], &[0.0], 0.0, 1.0).unwrap();
        assert_eq!(r.pcd, 0.0);
    }

    #[test]
    fn pcd_mean_is_sum_over_n() {
        let y = [1.0, 2.0, 4.0, 8.0];
        let yhat = [1.5, 2.0, 3.0, 9.0];
        let r = evaluate_predictions(&y, &yhat, 0.0, 1.0).unwrap();
        assert!((r.pcd - r.pcd_sum / 4.0).abs() < 1e-12);
        assert!(r.per_sample_pcd.iter().all(|p| p.is_finite() && *p >= 0.0));
    }

    #[test]
    fn raw_errors_rescale_with_target_span() {
        // Span 4: raw_mae = mae*4, raw_mse = mse*16.
        let r = evaluate_predictions(&[0.5], &[0.75], 1.0, 5.0).unwrap();
        assert!((r.raw_mae - 1.0).abs() < 1e-12);
        assert!((r.raw_mse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_sized() {
        let (train, test) = split_indices(10_000, 0.75, 3).unwrap();
        assert_eq!(train.len(), 7_500);
        assert_eq!(test.len(), 2_500);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10_000).collect::<Vec<_>>());

        let (again, _) = split_indices(10_000, 0.75, 3).unwrap();
        assert_eq!(train, again);
        let (other, _) = split_indices(10_000, 0.75, 4).unwrap();
        assert_ne!(train, other);
    }

    #[test]
    fn split_rejects_degenerate_fraction() {
        assert!(split_indices(10, 0.0, 0).is_err());
        assert!(split_indices(10, 1.0, 0).is_err());
    }
}
