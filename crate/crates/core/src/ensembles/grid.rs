//! Exhaustive cross-validated hyperparameter search.
//!
//! Combinations are enumerated in axis-listing order (the first listed
//! axis varies slowest) and ties on the CV metric keep the earliest
//! combination. The trial count is the number of combinations; every
//! trial costs `folds` fits.

use rayon::prelude::*;

use super::{
    fit_boosted, fit_forest, predict_proba_boosted, predict_proba_forest, BoostHyperparams,
    Criterion, MaxFeatures, TreeHyperparams,
};
use crate::error::{Error, Result};
use crate::eval::roc_and_auc;
use crate::featurize::FeatureMatrix;
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestGrid {
    pub bootstrap: Vec<bool>,
    pub max_depth: Vec<usize>,
    pub max_features: Vec<MaxFeatures>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub n_estimators: Vec<usize>,
    pub criterion: Vec<Criterion>,
}

impl ForestGrid {
    /// The reference search space: 1x10x2x4x3x9x2 = 4,320 combinations.
    pub fn reference() -> ForestGrid {
        ForestGrid {
            bootstrap: vec![true],
            max_depth: vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
            max_features: vec![MaxFeatures::Sqrt, MaxFeatures::Log2],
            min_samples_leaf: vec![1, 2, 4, 8],
            min_samples_split: vec![2, 5, 10],
            n_estimators: vec![400, 600, 800, 1000, 1200, 1400, 1600, 1800, 2000],
            criterion: vec![Criterion::Gini, Criterion::Entropy],
        }
    }

    pub fn n_combinations(&self) -> usize {
        self.bootstrap.len()
            * self.max_depth.len()
            * self.max_features.len()
            * self.min_samples_leaf.len()
            * self.min_samples_split.len()
            * self.n_estimators.len()
            * self.criterion.len()
    }

    pub fn combinations(&self) -> Vec<TreeHyperparams> {
        let mut out = Vec::with_capacity(self.n_combinations());
        for &bootstrap in &self.bootstrap {
            for &max_depth in &self.max_depth {
                for &max_features in &self.max_features {
                    for &min_samples_leaf in &self.min_samples_leaf {
                        for &min_samples_split in &self.min_samples_split {
                            for &n_estimators in &self.n_estimators {
                                for &criterion in &self.criterion {
                                    out.push(TreeHyperparams {
                                        max_depth,
                                        max_features,
                                        min_samples_leaf,
                                        min_samples_split,
                                        n_estimators,
                                        criterion,
                                        bootstrap,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostGrid {
    pub subsample: Vec<f64>,
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub colsample_bytree: Vec<f64>,
    pub colsample_bylevel: Vec<f64>,
}

impl BoostGrid {
    /// The reference search space: 3x3x6x5x6x6 = 9,720 combinations.
    pub fn reference() -> BoostGrid {
        BoostGrid {
            subsample: vec![0.7, 0.8, 0.9],
            n_estimators: vec![100, 500, 1000],
            max_depth: vec![3, 5, 6, 10, 15, 20],
            learning_rate: vec![0.01, 0.1, 0.2, 0.3, 0.4],
            colsample_bytree: vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            colsample_bylevel: vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        }
    }

    pub fn n_combinations(&self) -> usize {
        self.subsample.len()
            * self.n_estimators.len()
            * self.max_depth.len()
            * self.learning_rate.len()
            * self.colsample_bytree.len()
            * self.colsample_bylevel.len()
    }

    pub fn combinations(&self) -> Vec<BoostHyperparams> {
        let mut out = Vec::with_capacity(self.n_combinations());
        for &subsample in &self.subsample {
            for &n_estimators in &self.n_estimators {
                for &max_depth in &self.max_depth {
                    for &learning_rate in &self.learning_rate {
                        for &colsample_bytree in &self.colsample_bytree {
                            for &colsample_bylevel in &self.colsample_bylevel {
                                out.push(BoostHyperparams {
                                    n_estimators,
                                    max_depth,
                                    learning_rate,
                                    subsample,
                                    colsample_bytree,
                                    colsample_bylevel,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult<H> {
    pub best: H,
    /// Mean cross-validated AUC of the winner.
    pub best_score: f64,
    /// Number of hyperparameter combinations examined.
    pub n_trials: usize,
    /// Total model fits performed (`n_trials x folds`).
    pub n_fits: usize,
}

/// Deterministic stratified k-fold assignment: shuffle each class, deal
/// round-robin.
fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    use rand::seq::SliceRandom;
    if folds < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".to_string()));
    }
    let mut assignment = vec![0usize; labels.len()];
    let mut rng = rng_from(seed);
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::TooSmall {
                n: members.len(),
                min: folds,
            });
        }
        members.shuffle(&mut rng);
        for (pos, &row) in members.iter().enumerate() {
            assignment[row] = pos % folds;
        }
    }
    Ok(assignment)
}

/// Mean AUC over the folds. The fold assignment and per-fold fit seeds are
/// shared by every grid combination so scores are comparable and exact
/// metric ties are possible.
fn cv_auc<F>(
    matrix: &FeatureMatrix,
    assignment: &[usize],
    folds: usize,
    seed: u64,
    fit_predict: F,
) -> Result<f64>
where
    F: Fn(&FeatureMatrix, &FeatureMatrix, u64) -> Result<Vec<f64>> + Sync,
{
    let mut total = 0.0;
    for fold in 0..folds {
        let train_idx: Vec<usize> = (0..matrix.n_rows())
            .filter(|&i| assignment[i] != fold)
            .collect();
        let test_idx: Vec<usize> = (0..matrix.n_rows())
            .filter(|&i| assignment[i] == fold)
            .collect();
        let train = matrix.select_rows(&train_idx);
        let test = matrix.select_rows(&test_idx);
        let scores = fit_predict(&train, &test, derive_seed(seed, fold as u64))?;
        let (_, auc) = roc_and_auc(&scores, &test.labels)?;
        total += auc;
    }
    Ok(total / folds as f64)
}

/// Exhaustive forest search; returns the best combination by mean CV AUC.
pub fn grid_search_forest(
    matrix: &FeatureMatrix,
    grid: &ForestGrid,
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult<TreeHyperparams>> {
    let combos = grid.combinations();
    if combos.is_empty() {
        return Err(Error::InvalidConfig("empty grid".to_string()));
    }
    let assignment = stratified_folds(&matrix.labels, folds, seed)?;
    let scores: Vec<f64> = combos
        .par_iter()
        .map(|hp| {
            cv_auc(matrix, &assignment, folds, seed, |train, test, fit_seed| {
                let model = fit_forest(train, hp, fit_seed)?;
                predict_proba_forest(&model, test)
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0usize;
    for (idx, score) in scores.iter().enumerate() {
        if *score > scores[best] {
            best = idx;
        }
    }
    Ok(GridSearchResult {
        best: combos[best],
        best_score: scores[best],
        n_trials: combos.len(),
        n_fits: combos.len() * folds,
    })
}

/// Exhaustive boosting search; returns the best combination by mean CV AUC.
pub fn grid_search_boost(
    matrix: &FeatureMatrix,
    grid: &BoostGrid,
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult<BoostHyperparams>> {
    let combos = grid.combinations();
    if combos.is_empty() {
        return Err(Error::InvalidConfig("empty grid".to_string()));
    }
    let scores: Vec<f64> = {
        let assignment = stratified_folds(&matrix.labels, folds, seed)?;
        combos
            .par_iter()
            .map(|hp| {
                cv_auc(matrix, &assignment, folds, seed, |train, test, fit_seed| {
                    let model = fit_boosted(train, hp, fit_seed)?;
                    predict_proba_boosted(&model, test)
                })
            })
            .collect::<Result<_>>()?
    };
    let mut best = 0usize;
    for (idx, score) in scores.iter().enumerate() {
        if *score > scores[best] {
            best = idx;
        }
    }
    Ok(GridSearchResult {
        best: combos[best],
        best_score: scores[best],
        n_trials: combos.len(),
        n_fits: combos.len() * folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_matrix() -> FeatureMatrix {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..120 {
            let v = f64::from(i % 12);
            rows.push(vec![v, f64::from((i * 5) % 7)]);
            labels.push(u8::from(v >= 6.0));
        }
        FeatureMatrix::new(vec!["v".to_string(), "n".to_string()], rows, labels)
    }

    #[test]
    fn reference_grids_have_expected_sizes() {
        assert_eq!(ForestGrid::reference().n_combinations(), 4_320);
        assert_eq!(BoostGrid::reference().n_combinations(), 9_720);
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let grid = ForestGrid {
            bootstrap: vec![true],
            max_depth: vec![3],
            max_features: vec![MaxFeatures::All],
            min_samples_leaf: vec![2],
            min_samples_split: vec![4],
            n_estimators: vec![5],
            criterion: vec![Criterion::Gini],
        };
        let result = grid_search_forest(&toy_matrix(), &grid, 3, 7).unwrap();
        assert_eq!(result.n_trials, 1);
        assert_eq!(result.n_fits, 3);
        assert_eq!(result.best, grid.combinations()[0]);
    }

    #[test]
    fn ties_break_to_the_first_combination() {
        // min_samples_split 2 vs 3 never matters when every split node has
        // more rows than that, and folds and fit seeds are shared across
        // combinations, so the two CV scores tie exactly.
        let matrix = toy_matrix();
        let grid = ForestGrid {
            bootstrap: vec![false],
            max_depth: vec![4],
            max_features: vec![MaxFeatures::All],
            min_samples_leaf: vec![1],
            min_samples_split: vec![2, 3],
            n_estimators: vec![3],
            criterion: vec![Criterion::Gini],
        };
        let result = grid_search_forest(&matrix, &grid, 3, 1).unwrap();
        assert_eq!(result.n_trials, 2);
        assert_eq!(
            result.best.min_samples_split, 2,
            "tie must keep the first combination"
        );
    }

    #[test]
    fn boost_grid_runs_end_to_end() {
        let grid = BoostGrid {
            subsample: vec![1.0],
            n_estimators: vec![10],
            max_depth: vec![2],
            learning_rate: vec![0.3],
            colsample_bytree: vec![1.0],
            colsample_bylevel: vec![1.0],
        };
        let result = grid_search_boost(&toy_matrix(), &grid, 3, 7).unwrap();
        assert_eq!(result.n_trials, 1);
        assert!(result.best_score > 0.8, "score {}", result.best_score);
    }

    #[test]
    fn fold_assignment_is_stratified() {
        let labels: Vec<u8> = (0..90).map(|i| u8::from(i % 9 == 0)).collect();
        let assignment = stratified_folds(&labels, 3, 5).unwrap();
        for fold in 0..3 {
            let pos = labels
                .iter()
                .zip(&assignment)
                .filter(|(&l, &a)| l == 1 && a == fold)
                .count();
            assert!(pos >= 3, "fold {fold} has {pos} positives");
        }
    }
}
