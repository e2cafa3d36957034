//! Preset end-to-end experiments: cohort → features → split → preprocess
//! → fit → calibrate → one evaluation on the untouched test split.
//!
//! Presets reproduce the reference model configurations:
//!
//! * `model1` — logistic regression, dichotomous features, fixed 0.5
//!   threshold, no preprocessing.
//! * `model2` — as model1 but Youden-calibrated on the training set.
//! * `model3` — logistic regression, multivariable features, power
//!   transform + oversampling, Youden-calibrated.
//! * `rf` / `boost` — tree ensembles on the model3 preprocessing.
//!
//! Each preset runs from its own seed (derived from the master seed and
//! the preset name) so adding a preset never perturbs the others. The test
//! split is hashed at split time and re-hashed after training; a mismatch
//! aborts the run.

use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::codemap::CodeMap;
use crate::cohort::{
    build_fixed, build_flexible, Cohort, CohortSpec, FixedWindowSpec, FlexibleWindowSpec,
};
use crate::ensembles::{
    fit_boosted, fit_forest, predict_proba_boosted, predict_proba_forest, BoostHyperparams,
    BoostedModel, ForestModel, TreeHyperparams,
};
use crate::error::{Error, Result};
use crate::eval::{metrics_at, youden_threshold, ComparisonEntry, MetricsRow, SweepEntry};
use crate::events::EventStore;
use crate::featurize::{featurize, FeatureMatrix, FeatureMode, FeatureSpec};
use crate::glm::{fit_logistic, predict_proba, FitOptions, LogisticModel};
use crate::preprocess::{random_oversample, split, PowerTransform, SplitPlan};
use crate::rng::derive_seed_named;

// ---------------------------------------------------------------------------
// presets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PresetName {
    Model1,
    Model2,
    Model3,
    Rf,
    Boost,
}

impl PresetName {
    pub const ALL: [PresetName; 5] = [
        PresetName::Model1,
        PresetName::Model2,
        PresetName::Model3,
        PresetName::Rf,
        PresetName::Boost,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Model1 => "model1",
            PresetName::Model2 => "model2",
            PresetName::Model3 => "model3",
            PresetName::Rf => "rf",
            PresetName::Boost => "boost",
        }
    }

    pub fn definition(self) -> PresetDef {
        match self {
            PresetName::Model1 => PresetDef {
                feature_mode: FeatureMode::Dichotomous,
                use_pt: false,
                use_rote: false,
                calibration: Calibration::FixedHalf,
            },
            PresetName::Model2 => PresetDef {
                feature_mode: FeatureMode::Dichotomous,
                use_pt: false,
                use_rote: false,
                calibration: Calibration::Youden,
            },
            PresetName::Model3 | PresetName::Rf | PresetName::Boost => PresetDef {
                feature_mode: FeatureMode::Multivariable,
                use_pt: true,
                use_rote: true,
                calibration: Calibration::Youden,
            },
        }
    }
}

impl std::fmt::Display for PresetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "model1" => Ok(PresetName::Model1),
            "model2" => Ok(PresetName::Model2),
            "model3" => Ok(PresetName::Model3),
            "rf" => Ok(PresetName::Rf),
            "boost" | "xgboost" => Ok(PresetName::Boost),
            _ => Err(Error::Format(format!("unknown preset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calibration {
    /// Classify at probability 0.5, uncalibrated.
    FixedHalf,
    /// Maximize J on the training scores, frozen before test evaluation.
    Youden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetDef {
    pub feature_mode: FeatureMode,
    pub use_pt: bool,
    pub use_rote: bool,
    pub calibration: Calibration,
}

// ---------------------------------------------------------------------------
// experiment config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub cohort: CohortSpec,
    pub presets: Vec<PresetName>,
    pub seed: u64,
    pub train_fraction: f64,
    /// Youden calibration on a held-out slice of the training split
    /// instead of the fitted rows.
    pub calibration_split: Option<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if matches!(self.cohort, CohortSpec::Imported) {
            return Err(Error::InvalidConfig(
                "experiment config needs a fixed or flexible cohort spec".to_string(),
            ));
        }
        if self.presets.is_empty() {
            return Err(Error::InvalidConfig("no presets requested".to_string()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        #[derive(Deserialize)]
        struct CohortSection {
            mode: String,
            outcome: String,
            obs_start: Option<NaiveDate>,
            index_date: Option<NaiveDate>,
            pred_end: Option<NaiveDate>,
            min_history_days: Option<i64>,
        }
        #[derive(Deserialize)]
        struct FileShape {
            #[serde(default = "default_seed")]
            seed: u64,
            #[serde(default = "default_fraction")]
            train_fraction: f64,
            #[serde(default)]
            calibration_split: Option<f64>,
            presets: Vec<String>,
            cohort: CohortSection,
        }
        fn default_seed() -> u64 {
            42
        }
        fn default_fraction() -> f64 {
            0.9
        }

        let file: FileShape =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let cohort = match file.cohort.mode.as_str() {
            "fixed" => {
                let missing = |what: &str| {
                    Error::InvalidConfig(format!("fixed cohort config needs `{what}`"))
                };
                CohortSpec::Fixed(FixedWindowSpec {
                    obs_start: file.cohort.obs_start.ok_or_else(|| missing("obs_start"))?,
                    index_date: file
                        .cohort
                        .index_date
                        .ok_or_else(|| missing("index_date"))?,
                    pred_end: file.cohort.pred_end.ok_or_else(|| missing("pred_end"))?,
                    outcome_category: file.cohort.outcome,
                })
            }
            "flexible" => CohortSpec::Flexible(FlexibleWindowSpec {
                min_history_days: file.cohort.min_history_days.unwrap_or(0),
                outcome_category: file.cohort.outcome,
            }),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown cohort mode {other:?} (want fixed|flexible)"
                )));
            }
        };
        let presets = file
            .presets
            .iter()
            .map(|s| PresetName::from_str(s))
            .collect::<Result<Vec<_>>>()?;
        let config = ExperimentConfig {
            cohort,
            presets,
            seed: file.seed,
            train_fraction: file.train_fraction,
            calibration_split: file.calibration_split,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        ExperimentConfig::from_toml(&text)
    }
}

fn build_cohort(store: &EventStore, codemap: &CodeMap, spec: &CohortSpec) -> Result<Cohort> {
    match spec {
        CohortSpec::Fixed(fixed) => build_fixed(store, codemap, fixed),
        CohortSpec::Flexible(flexible) => build_flexible(store, codemap, flexible),
        CohortSpec::Imported => Err(Error::InvalidConfig(
            "cannot rebuild an imported cohort".to_string(),
        )),
    }
}

// ---------------------------------------------------------------------------
// single-preset run
// ---------------------------------------------------------------------------

/// Instrumentation captured while running one preset; lets callers verify
/// pipeline hygiene (untouched test split, balanced training classes,
/// transform fitted on training rows only).
#[derive(Debug, Clone, PartialEq)]
pub struct PresetAudit {
    pub test_hash_at_split: String,
    pub test_hash_at_eval: String,
    pub train_hash_at_split: String,
    /// Hash of the matrix the power transform was fitted on, when PT ran.
    pub pt_input_hash: Option<String>,
    /// Whether the PT input rows were exactly the training-split rows.
    pub pt_rows_are_train_rows: Option<bool>,
    /// (positive, negative) training counts after oversampling, when it ran.
    pub rote_class_counts: Option<(usize, usize)>,
    /// Columns removed because they were constant in the training split.
    pub dropped_columns: Vec<String>,
}

/// Knobs for a single preset run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub train_fraction: f64,
    /// When set, the Youden threshold is computed on scores of a held-out
    /// slice of the training split (this fraction of it) instead of the
    /// rows the model was fitted on. The model itself is fitted on the
    /// remainder.
    pub calibration_split: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            train_fraction: 0.9,
            calibration_split: None,
        }
    }
}

/// Run one preset over a prebuilt cohort: featurize → split → fit
/// preprocessing on train → oversample train → fit → calibrate on train
/// (or a validation slice of it) → evaluate once on the untouched test
/// split.
pub fn run_preset_on_cohort(
    store: &EventStore,
    codemap: &CodeMap,
    cohort: &Cohort,
    preset: PresetName,
    seed: u64,
    options: &RunOptions,
) -> Result<(MetricsRow, PresetAudit)> {
    let train_fraction = options.train_fraction;
    if let Some(fraction) = options.calibration_split {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "calibration_split must be in (0,1), got {fraction}"
            )));
        }
    }
    let def = preset.definition();
    let spec = FeatureSpec::all_features(codemap, def.feature_mode);
    let matrix = featurize(store, cohort, codemap, &spec)?;

    let plan = SplitPlan {
        train_fraction,
        seed,
        stratified: true,
    };
    let (train_raw, test) = split(&matrix, &plan)?;
    let test_hash_at_split = test.bytes_hash();
    let train_hash_at_split = train_raw.bytes_hash();

    // Columns constant in the training split carry no information and
    // break the GLM (they duplicate the intercept); drop them everywhere.
    // The keep-list is derived from training rows only.
    let keep: Vec<String> = train_raw
        .column_names
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let col = train_raw.column(*idx);
            col.iter().any(|v| *v != col[0])
        })
        .map(|(_, name)| name.clone())
        .collect();
    let dropped_columns: Vec<String> = train_raw
        .column_names
        .iter()
        .filter(|name| !keep.contains(name))
        .cloned()
        .collect();
    let train_kept = if dropped_columns.is_empty() {
        train_raw.clone()
    } else {
        train_raw.select_columns(&keep)?
    };

    let (mut train, pt, pt_input_hash, pt_rows_are_train_rows) = if def.use_pt {
        let pt = PowerTransform::fit(&train_kept)?;
        let rows_match = train_kept.row_ids == train_raw.row_ids;
        (
            pt.apply(&train_kept)?,
            Some(pt),
            Some(train_kept.bytes_hash()),
            Some(rows_match),
        )
    } else {
        (train_kept.clone(), None, None, None)
    };
    // Optional held-out calibration slice, carved from the training split
    // before oversampling (it must stay unduplicated).
    let calibration = match options.calibration_split {
        Some(fraction) => {
            let plan = SplitPlan {
                train_fraction: 1.0 - fraction,
                seed: derive_seed_named(seed, "calibration"),
                stratified: true,
            };
            let (fit_part, val_part) = split(&train, &plan)?;
            train = fit_part;
            Some(val_part)
        }
        None => None,
    };
    let mut rote_class_counts = None;
    if def.use_rote {
        train = random_oversample(&train, derive_seed_named(seed, "rote"))?;
        rote_class_counts = Some((train.n_positive(), train.n_rows() - train.n_positive()));
    }

    enum Fitted {
        Logistic(LogisticModel),
        Forest(ForestModel),
        Boosted(BoostedModel),
    }
    let is_fixed_cohort = matches!(cohort.spec, CohortSpec::Fixed(_));
    let fitted = match preset {
        PresetName::Model1 | PresetName::Model2 | PresetName::Model3 => {
            Fitted::Logistic(fit_logistic(&train, &FitOptions::default())?)
        }
        PresetName::Rf => {
            let hp = if is_fixed_cohort {
                TreeHyperparams::fixed_cohort()
            } else {
                TreeHyperparams::default()
            };
            Fitted::Forest(fit_forest(&train, &hp, seed)?)
        }
        PresetName::Boost => {
            let hp = if is_fixed_cohort {
                BoostHyperparams::fixed_cohort()
            } else {
                BoostHyperparams::default()
            };
            Fitted::Boosted(fit_boosted(&train, &hp, seed)?)
        }
    };
    let predict = |m: &FeatureMatrix| -> Result<Vec<f64>> {
        match &fitted {
            Fitted::Logistic(model) => predict_proba(model, m),
            Fitted::Forest(model) => predict_proba_forest(model, m),
            Fitted::Boosted(model) => predict_proba_boosted(model, m),
        }
    };

    let threshold = match def.calibration {
        Calibration::FixedHalf => 0.5,
        Calibration::Youden => {
            let calibration_matrix = calibration.as_ref().unwrap_or(&train);
            let scores = predict(calibration_matrix)?;
            youden_threshold(&scores, &calibration_matrix.labels)?.0
        }
    };

    // Single evaluation on the untouched test split; preprocessing is
    // applied to a copy with parameters from the training fit.
    let test_kept = if dropped_columns.is_empty() {
        test.clone()
    } else {
        test.select_columns(&keep)?
    };
    let test_view = match &pt {
        Some(pt) => pt.apply(&test_kept)?,
        None => test_kept,
    };
    let scores = predict(&test_view)?;
    let metrics = metrics_at(&scores, &test.labels, threshold)?;

    let test_hash_at_eval = test.bytes_hash();
    if test_hash_at_eval != test_hash_at_split {
        return Err(Error::Format(
            "test split was modified between split and evaluation".to_string(),
        ));
    }
    Ok((
        metrics,
        PresetAudit {
            test_hash_at_split,
            test_hash_at_eval,
            train_hash_at_split,
            pt_input_hash,
            pt_rows_are_train_rows,
            rote_class_counts,
            dropped_columns,
        },
    ))
}

// ---------------------------------------------------------------------------
// experiments and sweeps
// ---------------------------------------------------------------------------

/// Run every preset in the config; failures are reported per preset, never
/// dropped.
pub fn run_experiment(
    store: &EventStore,
    codemap: &CodeMap,
    config: &ExperimentConfig,
) -> Result<Vec<ComparisonEntry>> {
    config.validate()?;
    let cohort = build_cohort(store, codemap, &config.cohort)?;
    Ok(config
        .presets
        .iter()
        .map(|&preset| {
            let preset_seed = derive_seed_named(config.seed, preset.as_str());
            let options = RunOptions {
                train_fraction: config.train_fraction,
                calibration_split: config.calibration_split,
            };
            let metrics =
                run_preset_on_cohort(store, codemap, &cohort, preset, preset_seed, &options)
                    .map(|(m, _)| m)
                    .map_err(|e| e.to_string());
            ComparisonEntry {
                model: preset.as_str().to_string(),
                metrics,
            }
        })
        .collect())
}

/// The reference minimum-history thresholds.
pub const DEFAULT_THRESHOLDS: [i64; 7] = [0, 30, 60, 90, 180, 360, 720];

/// One full preset experiment per threshold. Each row carries the
/// flexible-cohort member/outcome counts at that threshold; experiment
/// failures ride along in the row.
pub fn run_threshold_sweep(
    store: &EventStore,
    codemap: &CodeMap,
    outcome_category: &str,
    thresholds: &[i64],
    preset: PresetName,
    seed: u64,
    train_fraction: f64,
) -> Result<Vec<SweepEntry>> {
    if thresholds.is_empty() {
        return Err(Error::InvalidConfig(
            "thresholds must be non-empty".to_string(),
        ));
    }
    thresholds
        .iter()
        .map(|&threshold| {
            let spec = FlexibleWindowSpec {
                min_history_days: threshold,
                outcome_category: outcome_category.to_string(),
            };
            let cohort = build_flexible(store, codemap, &spec)?;
            let sweep_seed = derive_seed_named(seed, &format!("sweep-{threshold}"));
            let options = RunOptions {
                train_fraction,
                calibration_split: None,
            };
            let metrics =
                run_preset_on_cohort(store, codemap, &cohort, preset, sweep_seed, &options)
                    .map(|(m, _)| m)
                    .map_err(|e| e.to_string());
            Ok(SweepEntry {
                threshold,
                n_individuals: cohort.n_members(),
                n_outcomes: cohort.n_positive(),
                metrics,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// model files
// ---------------------------------------------------------------------------

pub const MODEL_FILE_VERSION: u32 = 1;

/// Versioned on-disk model format (JSON) for audit and cross-run
/// comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub version: u32,
    #[serde(flatten)]
    pub model: ModelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Logistic(LogisticModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
}

impl SavedModel {
    pub fn new(model: ModelKind) -> SavedModel {
        SavedModel {
            version: MODEL_FILE_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::events::write_file(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<SavedModel> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let saved: SavedModel =
            serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        if saved.version != MODEL_FILE_VERSION {
            return Err(Error::Format(format!(
                "unsupported model file version {}",
                saved.version
            )));
        }
        Ok(saved)
    }
}
