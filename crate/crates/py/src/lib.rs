//! Python bindings: the main types and operations of the pipeline, exposed
//! as thin wrappers. Dates cross the boundary as ISO `YYYY-MM-DD` strings;
//! errors surface as `ValueError`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use flexwin::codemap::{normalize_code, CodeMap, CodeSystem, EventSource};
use flexwin::cohort::{
    build_fixed, build_flexible, sweep_thresholds, Cohort, FixedWindowSpec, FlexibleWindowSpec,
};
use flexwin::ensembles::{
    fit_boosted, fit_forest, predict_proba_boosted, predict_proba_forest, BoostHyperparams,
    BoostedModel, ForestModel, TreeHyperparams,
};
use flexwin::error::Error;
use flexwin::eval;
use flexwin::events::EventStore;
use flexwin::featurize::{self, FeatureMatrix, FeatureMode, FeatureSpec};
use flexwin::glm::{self, FitOptions, LogisticModel};
use flexwin::pipeline::{run_experiment, run_threshold_sweep, ExperimentConfig, PresetName};
use flexwin::preprocess;
use flexwin::report::ReportFormat;
use flexwin::synth::{self, SynthConfig};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| PyValueError::new_err(format!("bad date {s:?}, expected YYYY-MM-DD")))
}

fn parse_system(s: &str) -> PyResult<CodeSystem> {
    CodeSystem::from_str(s).map_err(err)
}

// ---------------------------------------------------------------------------
// code maps
// ---------------------------------------------------------------------------

#[pyclass(name = "CodeMap")]
struct PyCodeMap {
    inner: CodeMap,
}

#[pymethods]
impl PyCodeMap {
    /// The bundled default category definitions.
    #[staticmethod]
    fn bundled() -> PyCodeMap {
        PyCodeMap {
            inner: CodeMap::bundled(),
        }
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<PyCodeMap> {
        Ok(PyCodeMap {
            inner: CodeMap::parse(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<PyCodeMap> {
        Ok(PyCodeMap {
            inner: CodeMap::load(&path).map_err(err)?,
        })
    }

    fn categories(&self) -> Vec<String> {
        self.inner
            .categories
            .iter()
            .map(|c| c.category_name.clone())
            .collect()
    }

    fn outcome_categories(&self) -> Vec<String> {
        self.inner.outcome_categories.iter().cloned().collect()
    }

    /// Whether an event (system, code, source) counts toward a category.
    #[pyo3(signature = (category, system, code, source = "CLAIMS"))]
    fn matches(&self, category: &str, system: &str, code: &str, source: &str) -> PyResult<bool> {
        let rule = self.inner.require_category(category).map_err(err)?;
        let system = parse_system(system)?;
        let source = EventSource::from_str(source).map_err(err)?;
        let code = normalize_code(code, system).map_err(err)?;
        Ok(rule.matches_event(system, code.text(), source))
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }
}

/// Canonicalize a raw code spelling (dots/whitespace stripped, uppercased).
#[pyfunction]
fn normalize(raw: &str, system: &str) -> PyResult<String> {
    let code = normalize_code(raw, parse_system(system)?).map_err(err)?;
    Ok(code.text().to_string())
}

// ---------------------------------------------------------------------------
// stores and cohorts
// ---------------------------------------------------------------------------

#[pyclass(name = "EventStore")]
struct PyEventStore {
    inner: EventStore,
}

#[pymethods]
impl PyEventStore {
    /// The 4-person reference corpus.
    #[staticmethod]
    fn fixture() -> PyEventStore {
        PyEventStore {
            inner: synth::fixture_store(),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (persons_path, events_path))]
    fn load(persons_path: PathBuf, events_path: PathBuf) -> PyResult<PyEventStore> {
        Ok(PyEventStore {
            inner: EventStore::load(&persons_path, &events_path, None).map_err(err)?,
        })
    }

    fn n_persons(&self) -> usize {
        self.inner.n_persons()
    }

    fn first_record_date(&self, person_id: &str) -> PyResult<Option<String>> {
        Ok(self
            .inner
            .first_record_date(person_id)
            .map_err(err)?
            .map(|d| d.to_string()))
    }

    fn first_outcome_date(
        &self,
        person_id: &str,
        codemap: &PyCodeMap,
        category: &str,
    ) -> PyResult<Option<String>> {
        Ok(self
            .inner
            .first_outcome_date(person_id, &codemap.inner, category)
            .map_err(err)?
            .map(|d| d.to_string()))
    }

    fn save(&self, persons_path: PathBuf, events_path: PathBuf) -> PyResult<()> {
        self.inner.save(&persons_path, &events_path).map_err(err)
    }
}

/// Generate a synthetic corpus from a TOML config string. Returns
/// (store, derived_codemap, ground_truth_json).
#[pyfunction]
fn generate_synth(config_toml: &str, seed: u64) -> PyResult<(PyEventStore, PyCodeMap, String)> {
    let config = SynthConfig::from_toml(config_toml).map_err(err)?;
    let (store, truth) = synth::generate_store(&config, seed).map_err(err)?;
    Ok((
        PyEventStore { inner: store },
        PyCodeMap {
            inner: config.derive_codemap(),
        },
        truth.to_json(),
    ))
}

#[pyclass(name = "Cohort")]
struct PyCohort {
    inner: Cohort,
}

#[pymethods]
impl PyCohort {
    fn n_members(&self) -> usize {
        self.inner.n_members()
    }

    fn n_positive(&self) -> usize {
        self.inner.n_positive()
    }

    /// Members as (person_id, label, obs_start, obs_end, history_days).
    fn members(&self) -> Vec<(String, String, String, String, i64)> {
        self.inner
            .members
            .iter()
            .map(|m| {
                (
                    m.person_id.clone(),
                    m.label.as_str().to_string(),
                    m.obs_start.to_string(),
                    m.obs_end.to_string(),
                    m.history_days,
                )
            })
            .collect()
    }

    /// Excluded persons mapped to the exclusion reason.
    fn exclusions(&self) -> BTreeMap<String, String> {
        self.inner
            .exclusion_log
            .iter()
            .map(|(id, reason)| (id.clone(), reason.as_str().to_string()))
            .collect()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// Fixed-window cohort: observation `[obs_start, index_date]`, prediction
/// `(index_date, pred_end]`.
#[pyfunction]
fn cohort_fixed(
    store: &PyEventStore,
    codemap: &PyCodeMap,
    outcome: &str,
    obs_start: &str,
    index_date: &str,
    pred_end: &str,
) -> PyResult<PyCohort> {
    let spec = FixedWindowSpec {
        obs_start: parse_date(obs_start)?,
        index_date: parse_date(index_date)?,
        pred_end: parse_date(pred_end)?,
        outcome_category: outcome.to_string(),
    };
    Ok(PyCohort {
        inner: build_fixed(&store.inner, &codemap.inner, &spec).map_err(err)?,
    })
}

/// Flexible-window cohort: first record to first outcome (positive) or
/// last record (negative), with a minimum history length.
#[pyfunction]
#[pyo3(signature = (store, codemap, outcome, min_history_days = 0))]
fn cohort_flexible(
    store: &PyEventStore,
    codemap: &PyCodeMap,
    outcome: &str,
    min_history_days: i64,
) -> PyResult<PyCohort> {
    let spec = FlexibleWindowSpec {
        min_history_days,
        outcome_category: outcome.to_string(),
    };
    Ok(PyCohort {
        inner: build_flexible(&store.inner, &codemap.inner, &spec).map_err(err)?,
    })
}

/// Flexible-cohort (members, positives) counts per threshold.
#[pyfunction]
fn threshold_counts(
    store: &PyEventStore,
    codemap: &PyCodeMap,
    outcome: &str,
    thresholds: Vec<i64>,
) -> PyResult<Vec<(i64, usize, usize)>> {
    let counts =
        sweep_thresholds(&store.inner, &codemap.inner, outcome, &thresholds).map_err(err)?;
    Ok(counts
        .into_iter()
        .map(|c| (c.threshold, c.n_members, c.n_positive))
        .collect())
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

#[pyclass(name = "FeatureMatrix")]
struct PyFeatureMatrix {
    inner: FeatureMatrix,
}

#[pymethods]
impl PyFeatureMatrix {
    /// Build a matrix from raw rows (all columns treated as dynamic).
    #[new]
    fn new(column_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> PyFeatureMatrix {
        PyFeatureMatrix {
            inner: FeatureMatrix::new(column_names, rows, labels),
        }
    }

    fn column_names(&self) -> Vec<String> {
        self.inner.column_names.clone()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows.clone()
    }

    fn labels(&self) -> Vec<u8> {
        self.inner.labels.clone()
    }

    fn row_ids(&self) -> Vec<String> {
        self.inner.row_ids.clone()
    }

    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    fn select_columns(&self, names: Vec<String>) -> PyResult<PyFeatureMatrix> {
        Ok(PyFeatureMatrix {
            inner: self.inner.select_columns(&names).map_err(err)?,
        })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// Count (multivariable) or thresholded (dichotomous) features over the
/// cohort members' visible windows, plus static demographics.
#[pyfunction]
#[pyo3(signature = (store, cohort, codemap, mode = "multivariable", threshold = 1))]
fn featurize_cohort(
    store: &PyEventStore,
    cohort: &PyCohort,
    codemap: &PyCodeMap,
    mode: &str,
    threshold: u32,
) -> PyResult<PyFeatureMatrix> {
    let spec = FeatureSpec {
        categories: codemap.inner.feature_categories(),
        include_static: true,
        mode: FeatureMode::from_str(mode).map_err(err)?,
        dichotomize_threshold: threshold,
    };
    Ok(PyFeatureMatrix {
        inner: featurize::featurize(&store.inner, &cohort.inner, &codemap.inner, &spec)
            .map_err(err)?,
    })
}

// ---------------------------------------------------------------------------
// models
// ---------------------------------------------------------------------------

#[pyclass(name = "LogisticModel")]
struct PyLogisticModel {
    inner: LogisticModel,
}

#[pymethods]
impl PyLogisticModel {
    /// Coefficients `[intercept, features...]` in log-odds units.
    fn beta(&self) -> Vec<f64> {
        self.inner.beta.clone()
    }

    fn converged(&self) -> bool {
        self.inner.converged
    }

    /// Wald rows as (feature, or, ci_low, ci_high, p).
    fn odds(&self) -> Vec<(String, f64, f64, f64, f64)> {
        glm::odds_table(&self.inner)
            .into_iter()
            .map(|r| (r.feature, r.or, r.ci_low, r.ci_high, r.p_value))
            .collect()
    }

    fn predict(&self, matrix: &PyFeatureMatrix) -> PyResult<Vec<f64>> {
        glm::predict_proba(&self.inner, &matrix.inner).map_err(err)
    }
}

#[pyfunction]
fn logistic_fit(matrix: &PyFeatureMatrix) -> PyResult<PyLogisticModel> {
    Ok(PyLogisticModel {
        inner: glm::fit_logistic(&matrix.inner, &FitOptions::default()).map_err(err)?,
    })
}

#[pyclass(name = "ForestModel")]
struct PyForestModel {
    inner: ForestModel,
}

#[pymethods]
impl PyForestModel {
    fn predict(&self, matrix: &PyFeatureMatrix) -> PyResult<Vec<f64>> {
        predict_proba_forest(&self.inner, &matrix.inner).map_err(err)
    }

    fn n_trees(&self) -> usize {
        self.inner.trees.len()
    }
}

#[pyfunction]
#[pyo3(signature = (matrix, seed, n_estimators = 600))]
fn forest_fit(matrix: &PyFeatureMatrix, seed: u64, n_estimators: usize) -> PyResult<PyForestModel> {
    let hp = TreeHyperparams {
        n_estimators,
        ..Default::default()
    };
    Ok(PyForestModel {
        inner: fit_forest(&matrix.inner, &hp, seed).map_err(err)?,
    })
}

#[pyclass(name = "BoostedModel")]
struct PyBoostedModel {
    inner: BoostedModel,
}

#[pymethods]
impl PyBoostedModel {
    fn predict(&self, matrix: &PyFeatureMatrix) -> PyResult<Vec<f64>> {
        predict_proba_boosted(&self.inner, &matrix.inner).map_err(err)
    }

    fn base_score(&self) -> f64 {
        self.inner.base_score
    }
}

#[pyfunction]
#[pyo3(signature = (matrix, seed, n_estimators = 1000))]
fn boosted_fit(
    matrix: &PyFeatureMatrix,
    seed: u64,
    n_estimators: usize,
) -> PyResult<PyBoostedModel> {
    let hp = BoostHyperparams {
        n_estimators,
        ..Default::default()
    };
    Ok(PyBoostedModel {
        inner: fit_boosted(&matrix.inner, &hp, seed).map_err(err)?,
    })
}

// ---------------------------------------------------------------------------
// preprocessing and evaluation
// ---------------------------------------------------------------------------

/// The Yeo-Johnson transform.
#[pyfunction]
fn yeo_johnson(x: f64, lam: f64) -> f64 {
    preprocess::yj(x, lam)
}

/// Maximum-likelihood Yeo-Johnson λ for a column.
#[pyfunction]
fn fit_lambda(values: Vec<f64>) -> PyResult<f64> {
    preprocess::fit_lambda(&values).map_err(err)
}

/// Trapezoidal AUC (ties grouped).
#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    Ok(eval::roc_and_auc(&scores, &labels).map_err(err)?.1)
}

/// Youden-optimal threshold over observed scores: (threshold, J).
#[pyfunction]
fn youden_threshold(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<(f64, f64)> {
    eval::youden_threshold(&scores, &labels).map_err(err)
}

/// Confusion metrics at `score >= threshold` as a dict.
#[pyfunction]
fn metrics_at(
    scores: Vec<f64>,
    labels: Vec<u8>,
    threshold: f64,
) -> PyResult<BTreeMap<String, f64>> {
    let m = eval::metrics_at(&scores, &labels, threshold).map_err(err)?;
    Ok(BTreeMap::from([
        ("f1".to_string(), m.f1),
        ("auc".to_string(), m.auc),
        ("sensitivity".to_string(), m.sensitivity),
        ("precision".to_string(), m.precision),
        ("specificity".to_string(), m.specificity),
        ("threshold".to_string(), m.threshold_used),
        ("n_outcomes".to_string(), m.n_outcomes as f64),
        ("n_individuals".to_string(), m.n_individuals as f64),
    ]))
}

// ---------------------------------------------------------------------------
// end-to-end
// ---------------------------------------------------------------------------

/// Run preset experiments from a TOML config string; returns the
/// comparison report as CSV.
#[pyfunction]
fn experiment_csv(
    store: &PyEventStore,
    codemap: &PyCodeMap,
    config_toml: &str,
) -> PyResult<String> {
    let config = ExperimentConfig::from_toml(config_toml).map_err(err)?;
    let entries = run_experiment(&store.inner, &codemap.inner, &config).map_err(err)?;
    Ok(eval::comparison_report(&entries, ReportFormat::Csv))
}

/// Minimum-history sweep with one preset experiment per threshold; returns
/// the report as CSV.
#[pyfunction]
#[pyo3(signature = (store, codemap, outcome, thresholds, preset = "model2", seed = 42, train_fraction = 0.9))]
fn sweep_csv(
    store: &PyEventStore,
    codemap: &PyCodeMap,
    outcome: &str,
    thresholds: Vec<i64>,
    preset: &str,
    seed: u64,
    train_fraction: f64,
) -> PyResult<String> {
    let preset = PresetName::from_str(preset).map_err(err)?;
    let entries = run_threshold_sweep(
        &store.inner,
        &codemap.inner,
        outcome,
        &thresholds,
        preset,
        seed,
        train_fraction,
    )
    .map_err(err)?;
    Ok(eval::sweep_report(&entries, ReportFormat::Csv))
}

#[pymodule]
fn flexwin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCodeMap>()?;
    m.add_class::<PyEventStore>()?;
    m.add_class::<PyCohort>()?;
    m.add_class::<PyFeatureMatrix>()?;
    m.add_class::<PyLogisticModel>()?;
    m.add_class::<PyForestModel>()?;
    m.add_class::<PyBoostedModel>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synth, m)?)?;
    m.add_function(wrap_pyfunction!(cohort_fixed, m)?)?;
    m.add_function(wrap_pyfunction!(cohort_flexible, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_counts, m)?)?;
    m.add_function(wrap_pyfunction!(featurize_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(logistic_fit, m)?)?;
    m.add_function(wrap_pyfunction!(forest_fit, m)?)?;
    m.add_function(wrap_pyfunction!(boosted_fit, m)?)?;
    m.add_function(wrap_pyfunction!(yeo_johnson, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(youden_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_at, m)?)?;
    m.add_function(wrap_pyfunction!(experiment_csv, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    Ok(())
}
