//! Native decision-tree ensembles: bootstrap random forests and
//! gradient-boosted trees on logistic loss.
//!
//! Split finding is exact greedy over sorted unique values (no histogram
//! binning); thresholds are midpoints between adjacent observed values.
//! Trees train from per-tree RNG substreams so results are bit-identical
//! across runs and worker counts.

mod boost;
mod forest;
mod grid;
mod tree;

pub use boost::{fit_boosted, predict_proba_boosted, predict_raw_boosted, BoostedModel};
pub use forest::{fit_forest, predict_proba_forest, ForestModel};
pub use grid::{grid_search_boost, grid_search_forest, BoostGrid, ForestGrid, GridSearchResult};
pub use tree::{Node, Tree};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    /// Number of candidate features per split for `p` total features.
    pub fn resolve(self, p: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (p as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (p as f64).log2().floor() as usize,
            MaxFeatures::All => p,
        };
        k.clamp(1, p.max(1))
    }
}

impl std::str::FromStr for MaxFeatures {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "log2" => Ok(MaxFeatures::Log2),
            "all" => Ok(MaxFeatures::All),
            _ => Err(Error::Format(format!("unknown max_features {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Gini,
    /// Natural-log entropy.
    Entropy,
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            _ => Err(Error::Format(format!("unknown criterion {s:?}"))),
        }
    }
}

/// Random-forest hyperparameters. The default is the flexible-cohort
/// optimum (600 entropy trees of depth 10 with log2 feature sampling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeHyperparams {
    pub max_depth: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub n_estimators: usize,
    pub criterion: Criterion,
    pub bootstrap: bool,
}

impl Default for TreeHyperparams {
    fn default() -> Self {
        TreeHyperparams {
            max_depth: 10,
            max_features: MaxFeatures::Log2,
            min_samples_leaf: 8,
            min_samples_split: 10,
            n_estimators: 600,
            criterion: Criterion::Entropy,
            bootstrap: true,
        }
    }
}

impl TreeHyperparams {
    /// The fixed-cohort optimum (same shape, 1000 trees).
    pub fn fixed_cohort() -> Self {
        TreeHyperparams {
            n_estimators: 1000,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0
            || self.min_samples_leaf == 0
            || self.min_samples_split == 0
            || self.n_estimators == 0
        {
            return Err(Error::InvalidConfig(
                "tree hyperparameters must be positive".to_string(),
            ));
        }
        if self.min_samples_leaf > self.min_samples_split {
            return Err(Error::InvalidConfig(
                "min_samples_leaf must be <= min_samples_split".to_string(),
            ));
        }
        Ok(())
    }
}

/// Gradient-boosting hyperparameters. The default is the flexible-cohort
/// optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostHyperparams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub colsample_bylevel: f64,
}

impl Default for BoostHyperparams {
    fn default() -> Self {
        BoostHyperparams {
            n_estimators: 1000,
            max_depth: 3,
            learning_rate: 0.01,
            subsample: 0.8,
            colsample_bytree: 0.6,
            colsample_bylevel: 0.9,
        }
    }
}

impl BoostHyperparams {
    /// The fixed-cohort optimum.
    pub fn fixed_cohort() -> Self {
        BoostHyperparams {
            n_estimators: 500,
            max_depth: 3,
            learning_rate: 0.01,
            subsample: 0.9,
            colsample_bytree: 0.7,
            colsample_bylevel: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 || self.max_depth == 0 {
            return Err(Error::InvalidConfig(
                "n_estimators and max_depth must be positive".to_string(),
            ));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("subsample", self.subsample),
            ("colsample_bytree", self.colsample_bytree),
            ("colsample_bylevel", self.colsample_bylevel),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in (0,1], got {v}"
                )));
            }
        }
        Ok(())
    }
}
