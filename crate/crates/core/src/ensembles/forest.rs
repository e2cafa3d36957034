//! Bootstrap random forest over classification trees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_classification, ClassParams, Tree};
use super::TreeHyperparams;
use crate::error::{Error, Result};
use crate::featurize::FeatureMatrix;
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub feature_names: Vec<String>,
    pub seed: u64,
    pub hyperparams: TreeHyperparams,
}

/// Fit `n_estimators` trees, each on its own bootstrap sample (when
/// enabled) with a fresh random feature subset per split. Tree seeds
/// derive from the master seed by tree index, so training parallelism
/// never changes the model.
pub fn fit_forest(
    matrix: &FeatureMatrix,
    hyperparams: &TreeHyperparams,
    seed: u64,
) -> Result<ForestModel> {
    hyperparams.validate()?;
    let n = matrix.n_rows();
    let n_pos = matrix.n_positive();
    if n_pos == 0 || n_pos == n {
        return Err(Error::SingleClass);
    }
    let params = ClassParams {
        max_depth: hyperparams.max_depth,
        min_samples_leaf: hyperparams.min_samples_leaf,
        min_samples_split: hyperparams.min_samples_split,
        n_candidate_features: hyperparams.max_features.resolve(matrix.n_cols()),
        criterion: hyperparams.criterion,
    };
    let trees: Vec<Tree> = (0..hyperparams.n_estimators)
        .into_par_iter()
        .map(|tree_idx| {
            use rand::Rng;
            let mut rng = rng_from(derive_seed(seed, tree_idx as u64));
            let rows: Vec<usize> = if hyperparams.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_classification(&matrix.rows, &matrix.labels, rows, &params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        feature_names: matrix.column_names.clone(),
        seed,
        hyperparams: *hyperparams,
    })
}

/// Mean of per-tree leaf class frequencies.
pub fn predict_proba_forest(model: &ForestModel, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
    if matrix.column_names != model.feature_names {
        return Err(Error::ColumnMismatch {
            expected: model.feature_names.clone(),
            got: matrix.column_names.clone(),
        });
    }
    let n_trees = model.trees.len() as f64;
    Ok(matrix
        .rows
        .iter()
        .map(|row| model.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / n_trees)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::MaxFeatures;
    use crate::featurize::FeatureMatrix;
    use crate::glm::{fit_logistic, predict_proba, FitOptions};

    /// 400-row XOR dataset: the 4-cell truth table replicated 100 times.
    fn xor_matrix() -> FeatureMatrix {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..100 {
            for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                rows.push(vec![a, b]);
                labels.push(u8::from((a == 1.0) ^ (b == 1.0)));
            }
        }
        FeatureMatrix::new(vec!["a".to_string(), "b".to_string()], rows, labels)
    }

    #[test]
    fn forest_solves_xor_where_logistic_regression_cannot() {
        let matrix = xor_matrix();
        let model = fit_forest(&matrix, &TreeHyperparams::default(), 7).unwrap();
        let probs = predict_proba_forest(&model, &matrix).unwrap();
        let forest_accuracy = probs
            .iter()
            .zip(&matrix.labels)
            .filter(|(p, &l)| u8::from(**p >= 0.5) == l)
            .count() as f64
            / matrix.n_rows() as f64;
        assert_eq!(forest_accuracy, 1.0);

        let lr = fit_logistic(&matrix, &FitOptions::default()).unwrap();
        let lr_probs = predict_proba(&lr, &matrix).unwrap();
        let lr_accuracy = lr_probs
            .iter()
            .zip(&matrix.labels)
            .filter(|(p, &l)| u8::from(**p >= 0.5) == l)
            .count() as f64
            / matrix.n_rows() as f64;
        assert!(
            lr_accuracy < 0.6,
            "LR should be near chance, got {lr_accuracy}"
        );
    }

    #[test]
    fn pure_leaves_predict_certainty() {
        // y = a AND b is greedily separable, so a single unbootstrapped
        // tree reaches pure leaves and predicts with certainty.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..50 {
            for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                rows.push(vec![a, b]);
                labels.push(u8::from(a == 1.0 && b == 1.0));
            }
        }
        let matrix = FeatureMatrix::new(vec!["a".to_string(), "b".to_string()], rows, labels);
        let hp = TreeHyperparams {
            n_estimators: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            min_samples_leaf: 1,
            min_samples_split: 2,
            ..Default::default()
        };
        let model = fit_forest(&matrix, &hp, 1).unwrap();
        let probs = predict_proba_forest(&model, &matrix).unwrap();
        for (p, &l) in probs.iter().zip(&matrix.labels) {
            assert_eq!(*p, f64::from(l));
        }
    }

    #[test]
    fn forest_is_deterministic_given_seed() {
        let matrix = xor_matrix();
        let hp = TreeHyperparams {
            n_estimators: 20,
            ..Default::default()
        };
        let a = fit_forest(&matrix, &hp, 11).unwrap();
        let b = fit_forest(&matrix, &hp, 11).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(&matrix, &hp, 12).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn forest_predictions_survive_monotone_feature_transforms() {
        // Squaring a non-negative feature preserves split ranks, so training
        // predictions are identical.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let v = f64::from(i % 10);
            rows.push(vec![v, f64::from(i % 3)]);
            labels.push(u8::from((i % 10) >= 5));
        }
        let names = vec!["v".to_string(), "noise".to_string()];
        let base = FeatureMatrix::new(names.clone(), rows.clone(), labels.clone());
        let squared_rows: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] * r[0], r[1]]).collect();
        let squared = FeatureMatrix::new(names, squared_rows, labels);

        let hp = TreeHyperparams {
            n_estimators: 15,
            ..Default::default()
        };
        let model_base = fit_forest(&base, &hp, 3).unwrap();
        let model_squared = fit_forest(&squared, &hp, 3).unwrap();
        let p_base = predict_proba_forest(&model_base, &base).unwrap();
        let p_squared = predict_proba_forest(&model_squared, &squared).unwrap();
        assert_eq!(p_base, p_squared);
    }

    #[test]
    fn single_class_is_rejected() {
        let matrix = FeatureMatrix::new(
            vec!["x".to_string()],
            vec![vec![0.0], vec![1.0]],
            vec![1, 1],
        );
        assert!(matches!(
            fit_forest(&matrix, &TreeHyperparams::default(), 1),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn every_leaf_holds_min_samples() {
        // With bootstrap off the training rows are exactly 0..n, so the
        // min_samples_leaf bound can be checked by re-routing them.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..300 {
            rows.push(vec![f64::from(i % 17), f64::from((i * 7) % 23)]);
            labels.push(u8::from((i * 13) % 5 < 2));
        }
        let matrix = FeatureMatrix::new(vec!["u".to_string(), "w".to_string()], rows, labels);
        let hp = TreeHyperparams {
            n_estimators: 8,
            bootstrap: false,
            min_samples_leaf: 8,
            min_samples_split: 10,
            ..Default::default()
        };
        let model = fit_forest(&matrix, &hp, 13).unwrap();
        let all_rows: Vec<usize> = (0..matrix.n_rows()).collect();
        for tree in &model.trees {
            for (_, leaf_rows) in tree.leaf_rows(&matrix.rows, &all_rows) {
                assert!(leaf_rows.len() >= 8, "leaf with {} rows", leaf_rows.len());
            }
        }
    }
}
