//! Stagewise gradient boosting on logistic loss.
//!
//! The model starts from the base-rate log-odds. Each stage fits a
//! depth-limited regression tree to the current negative gradients
//! (residuals y − p) on a row subsample, with column subsampling first per
//! tree and then per depth level; leaf values are Newton steps Σg/Σh,
//! shrunk by the learning rate.

use serde::{Deserialize, Serialize};

use super::tree::{grow_regression, sample_indices, RegParams, Tree};
use super::BoostHyperparams;
use crate::error::{Error, Result};
use crate::featurize::FeatureMatrix;
use crate::glm::sigmoid;
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    /// Base-rate log-odds; the raw score before any stage.
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub feature_names: Vec<String>,
    pub seed: u64,
    pub hyperparams: BoostHyperparams,
}

pub fn fit_boosted(
    matrix: &FeatureMatrix,
    hyperparams: &BoostHyperparams,
    seed: u64,
) -> Result<BoostedModel> {
    hyperparams.validate()?;
    let n = matrix.n_rows();
    let p = matrix.n_cols();
    let n_pos = matrix.n_positive();
    if n_pos == 0 || n_pos == n {
        return Err(Error::SingleClass);
    }
    let base_rate = n_pos as f64 / n as f64;
    let base_score = (base_rate / (1.0 - base_rate)).ln();

    let mut raw = vec![base_score; n];
    let mut trees = Vec::with_capacity(hyperparams.n_estimators);
    let subsample_size = ((hyperparams.subsample * n as f64).round() as usize).clamp(1, n);
    let tree_cols = ((hyperparams.colsample_bytree * p as f64).round() as usize).clamp(1, p);
    let level_cols =
        ((hyperparams.colsample_bylevel * tree_cols as f64).round() as usize).clamp(1, tree_cols);

    for stage in 0..hyperparams.n_estimators {
        let mut rng = rng_from(derive_seed(seed, stage as u64));
        let rows = if subsample_size == n {
            (0..n).collect()
        } else {
            sample_indices(&mut rng, n, subsample_size)
        };
        // Column subsampling: by tree first, then by level within the
        // tree's set.
        let tree_features = sample_indices(&mut rng, p, tree_cols);
        let level_features: Vec<Vec<usize>> = (0..hyperparams.max_depth)
            .map(|_| {
                if level_cols == tree_features.len() {
                    tree_features.clone()
                } else {
                    sample_indices(&mut rng, tree_features.len(), level_cols)
                        .into_iter()
                        .map(|i| tree_features[i])
                        .collect()
                }
            })
            .collect();

        let mut gradient = vec![0.0; n];
        let mut hessian = vec![0.0; n];
        for &r in &rows {
            let mu = sigmoid(raw[r]);
            gradient[r] = f64::from(matrix.labels[r]) - mu;
            hessian[r] = mu * (1.0 - mu);
        }
        let tree = grow_regression(
            &matrix.rows,
            &gradient,
            &hessian,
            rows,
            &RegParams {
                max_depth: hyperparams.max_depth,
                level_features,
            },
        );
        for (score, row) in raw.iter_mut().zip(&matrix.rows) {
            *score += hyperparams.learning_rate * tree.predict_row(row);
        }
        trees.push(tree);
    }
    Ok(BoostedModel {
        base_score,
        trees,
        feature_names: matrix.column_names.clone(),
        seed,
        hyperparams: *hyperparams,
    })
}

/// Raw additive scores (log-odds scale).
pub fn predict_raw_boosted(model: &BoostedModel, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
    if matrix.column_names != model.feature_names {
        return Err(Error::ColumnMismatch {
            expected: model.feature_names.clone(),
            got: matrix.column_names.clone(),
        });
    }
    Ok(matrix
        .rows
        .iter()
        .map(|row| {
            model.base_score
                + model.hyperparams.learning_rate
                    * model.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
        })
        .collect())
}

/// σ(raw score) per row.
pub fn predict_proba_boosted(model: &BoostedModel, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
    Ok(predict_raw_boosted(model, matrix)?
        .into_iter()
        .map(sigmoid)
        .collect())
}
