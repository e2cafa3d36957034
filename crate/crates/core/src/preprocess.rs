//! Training-set-only preprocessing: power-transform normalization, random
//! oversampling, and stratified train/test splitting.
//!
//! Splitting comes first; transform parameters are fitted on training rows
//! and merely applied to test rows; oversampling duplicates minority
//! training rows. The test split is never refitted or resampled.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::FeatureMatrix;
use crate::rng::rng_from;

// ---------------------------------------------------------------------------
// Yeo-Johnson transform
// ---------------------------------------------------------------------------

/// The Yeo-Johnson transform.
///
/// For x >= 0: ((x+1)^λ − 1)/λ, or ln(x+1) at λ = 0.
/// For x <  0: −((−x+1)^{2−λ} − 1)/(2−λ), or −ln(−x+1) at λ = 2.
///
/// Computed via `exp_m1`/`ln_1p` so values stay stable for λ near the
/// special points.
pub fn yj(x: f64, lambda: f64) -> f64 {
    if x >= 0.0 {
        if lambda == 0.0 {
            x.ln_1p()
        } else {
            (lambda * x.ln_1p()).exp_m1() / lambda
        }
    } else {
        let two_minus = 2.0 - lambda;
        if two_minus == 0.0 {
            -(-x).ln_1p()
        } else {
            -((two_minus * (-x).ln_1p()).exp_m1()) / two_minus
        }
    }
}

/// Inverse of [`yj`] on its range.
pub fn yj_inverse(y: f64, lambda: f64) -> f64 {
    if y >= 0.0 {
        if lambda == 0.0 {
            y.exp_m1()
        } else {
            ((lambda * y).ln_1p() / lambda).exp_m1()
        }
    } else {
        let two_minus = 2.0 - lambda;
        if two_minus == 0.0 {
            -(-y).exp_m1()
        } else {
            -((-(two_minus) * y).ln_1p() / two_minus).exp_m1()
        }
    }
}

/// Gaussian profile log-likelihood of λ for a column (up to constants):
/// −n/2·ln σ̂²(λ) + (λ−1)·Σ sign(x)·ln(1+|x|).
fn yj_profile_loglik(column: &[f64], lambda: f64) -> f64 {
    let n = column.len() as f64;
    let transformed: Vec<f64> = column.iter().map(|&x| yj(x, lambda)).collect();
    let mean = transformed.iter().sum::<f64>() / n;
    let var = transformed.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 || !var.is_finite() {
        return f64::NEG_INFINITY;
    }
    let jacobian: f64 = column.iter().map(|&x| x.signum() * x.abs().ln_1p()).sum();
    -0.5 * n * var.ln() + (lambda - 1.0) * jacobian
}

/// Maximum-likelihood λ: coarse grid over [−2, 2] at step 0.01, then
/// golden-section refinement to |Δλ| < 1e-4.
pub fn fit_lambda(column: &[f64]) -> Result<f64> {
    let mut distinct = column.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateColumn("column".to_string()));
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=400 {
        let lambda = -2.0 + i as f64 * 0.01;
        let ll = yj_profile_loglik(column, lambda);
        if ll > best.0 {
            best = (ll, lambda);
        }
    }
    // Refine around the winning grid point.
    let mut a: f64 = (best.1 - 0.01).max(-2.0);
    let mut b: f64 = (best.1 + 0.01).min(2.0);
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = yj_profile_loglik(column, c);
    let mut fd = yj_profile_loglik(column, d);
    while (b - a) > 1e-4 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = yj_profile_loglik(column, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = yj_profile_loglik(column, d);
        }
    }
    Ok(0.5 * (a + b))
}

// ---------------------------------------------------------------------------
// fitted per-column transform
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub lambda: f64,
    /// Post-transform mean and standard deviation on the training rows,
    /// used for z-standardization.
    pub mean: f64,
    pub sd: f64,
}

/// Per-column Yeo-Johnson + z-standardization parameters, fitted on
/// training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTransform {
    pub columns: Vec<ColumnTransform>,
}

impl PowerTransform {
    /// Fit every column of the training matrix. Constant columns cannot
    /// carry a likelihood; they pass through untouched (λ=1, sd guard 1).
    pub fn fit(train: &FeatureMatrix) -> Result<PowerTransform> {
        let columns = train
            .column_names
            .iter()
            .enumerate()
            .map(|(idx, name)| {
                let values = train.column(idx);
                let lambda = match fit_lambda(&values) {
                    Ok(l) => l,
                    Err(Error::DegenerateColumn(_)) => 1.0,
                    Err(e) => return Err(e),
                };
                let transformed: Vec<f64> = values.iter().map(|&x| yj(x, lambda)).collect();
                let n = transformed.len() as f64;
                let mean = transformed.iter().sum::<f64>() / n;
                let var = transformed.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                Ok(ColumnTransform {
                    name: name.clone(),
                    lambda,
                    mean,
                    sd,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PowerTransform { columns })
    }

    /// Transform a matrix with the fitted parameters.
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        let expected: Vec<String> = self.columns.iter().map(|c| c.name.clone()).collect();
        if matrix.column_names != expected {
            return Err(Error::ColumnMismatch {
                expected,
                got: matrix.column_names.clone(),
            });
        }
        let mut out = matrix.clone();
        for row in &mut out.rows {
            for (value, col) in row.iter_mut().zip(&self.columns) {
                *value = (yj(*value, col.lambda) - col.mean) / col.sd;
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, &Vec<ColumnTransform>> =
            BTreeMap::from([("columns", &self.columns)]);
        let mut s = serde_json::to_string_pretty(&map).expect("serializable");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::events::write_file(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<PowerTransform> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// oversampling
// ---------------------------------------------------------------------------

/// Random oversampling: duplicate minority-class rows (sampled with
/// replacement) until the classes balance. All original rows are retained,
/// duplicates are appended.
pub fn random_oversample(matrix: &FeatureMatrix, seed: u64) -> Result<FeatureMatrix> {
    let n_pos = matrix.n_positive();
    let n_neg = matrix.n_rows() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let (minority_label, deficit) = if n_pos < n_neg {
        (1u8, n_neg - n_pos)
    } else {
        (0u8, n_pos - n_neg)
    };
    let minority_rows: Vec<usize> = (0..matrix.n_rows())
        .filter(|&i| matrix.labels[i] == minority_label)
        .collect();
    let mut rng = rng_from(seed);
    let mut out = matrix.clone();
    for _ in 0..deficit {
        let &pick = minority_rows
            .choose(&mut rng)
            .expect("minority class is non-empty");
        out.rows.push(matrix.rows[pick].clone());
        out.labels.push(matrix.labels[pick]);
        out.row_ids.push(matrix.row_ids[pick].clone());
        if !matrix.row_windows.is_empty() {
            out.row_windows.push(matrix.row_windows[pick]);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// splitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitPlan {
    pub fn new(seed: u64) -> SplitPlan {
        SplitPlan {
            train_fraction: 0.9,
            seed,
            stratified: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction must be in (0,1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Split rows into disjoint, exhaustive (train, test) sets. Stratified
/// splits hold each class's train share within one row of
/// `train_fraction`. Row order inside each part follows the input.
pub fn split(matrix: &FeatureMatrix, plan: &SplitPlan) -> Result<(FeatureMatrix, FeatureMatrix)> {
    plan.validate()?;
    let n = matrix.n_rows();
    if n < 10 {
        return Err(Error::TooSmall { n, min: 10 });
    }
    let mut rng = rng_from(plan.seed);
    let groups: Vec<Vec<usize>> = if plan.stratified {
        let pos: Vec<usize> = (0..n).filter(|&i| matrix.labels[i] == 1).collect();
        let neg: Vec<usize> = (0..n).filter(|&i| matrix.labels[i] == 0).collect();
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::SingleClass);
        }
        vec![neg, pos]
    } else {
        vec![(0..n).collect()]
    };
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for mut group in groups {
        group.shuffle(&mut rng);
        let take = ((plan.train_fraction * group.len() as f64).round() as usize).min(group.len());
        train_idx.extend(group.drain(..take));
        test_idx.extend(group);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        matrix.select_rows(&train_idx),
        matrix.select_rows(&test_idx),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn matrix_with_labels(labels: &[u8]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .enumerate()
            .map(|(i, _)| vec![i as f64])
            .collect();
        FeatureMatrix::new(vec!["x".to_string()], rows, labels.to_vec())
    }

    #[test]
    fn yj_identity_at_lambda_one() {
        for x in [-1000.0, -3.5, -1.0, 0.0, 0.5, 2.0, 1000.0] {
            assert_relative_eq!(yj(x, 1.0), x, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn yj_special_points() {
        assert_relative_eq!(yj(std::f64::consts::E - 1.0, 0.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(yj(-1.0, 2.0), -std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn yj_is_monotone() {
        let mut rng = rng_from(9);
        for _ in 0..200 {
            let lambda = rng.random_range(-2.0..2.0);
            let mut xs: Vec<f64> = (0..50).map(|_| rng.random_range(-50.0..50.0)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup();
            let ys: Vec<f64> = xs.iter().map(|&x| yj(x, lambda)).collect();
            for pair in ys.windows(2) {
                assert!(pair[0] < pair[1], "not monotone at lambda {lambda}");
            }
        }
    }

    #[test]
    fn yj_round_trips_with_inverse() {
        let mut rng = rng_from(10);
        for _ in 0..500 {
            let lambda = rng.random_range(-2.0..2.0);
            let x = rng.random_range(-1e3..1e3);
            let back = yj_inverse(yj(x, lambda), lambda);
            assert_relative_eq!(back, x, max_relative = 1e-9, epsilon = 1e-9);
        }
        // The special branches too.
        for lambda in [0.0, 2.0] {
            for x in [-500.0, -1.0, 0.0, 1.0, 500.0] {
                assert_relative_eq!(
                    yj_inverse(yj(x, lambda), lambda),
                    x,
                    max_relative = 1e-9,
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn lambda_near_one_for_gaussian_input() {
        // Deterministic standard-normal sample via Box-Muller.
        let mut rng = rng_from(11);
        let sample: Vec<f64> = (0..10_000)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let lambda = fit_lambda(&sample).unwrap();
        assert!((0.8..=1.2).contains(&lambda), "lambda {lambda} not near 1");

        // Independent coarse scan agrees on the neighbourhood of the optimum.
        let coarse_best = (-20..=20)
            .map(|i| i as f64 / 10.0)
            .max_by(|a, b| {
                yj_profile_loglik(&sample, *a)
                    .partial_cmp(&yj_profile_loglik(&sample, *b))
                    .unwrap()
            })
            .unwrap();
        assert!((coarse_best - lambda).abs() <= 0.1);
    }

    #[test]
    fn constant_column_is_degenerate() {
        assert!(matches!(
            fit_lambda(&[3.0, 3.0, 3.0]),
            Err(Error::DegenerateColumn(_))
        ));
    }

    #[test]
    fn lambda_reduces_skew_of_lognormal_counts() {
        let mut rng = rng_from(12);
        let sample: Vec<f64> = (0..5_000)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                z.exp()
            })
            .collect();
        let skewness = |xs: &[f64]| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
            m3 / m2.powf(1.5)
        };
        let lambda = fit_lambda(&sample).unwrap();
        let transformed: Vec<f64> = sample.iter().map(|&x| yj(x, lambda)).collect();
        assert!(skewness(&transformed).abs() < skewness(&sample).abs());
    }

    #[test]
    fn power_transform_fits_on_train_and_applies_elsewhere() {
        let train = FeatureMatrix::new(
            vec!["a".to_string(), "b".to_string()],
            vec![
                vec![0.0, 5.0],
                vec![1.0, 9.0],
                vec![2.0, 2.0],
                vec![5.0, 1.0],
            ],
            vec![0, 1, 0, 1],
        );
        let pt = PowerTransform::fit(&train).unwrap();
        let transformed = pt.apply(&train).unwrap();
        // Train columns are standardized: mean 0, population sd 1.
        for idx in 0..2 {
            let col = transformed.column(idx);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert_relative_eq!(mean, 0.0, epsilon = 1e-9);
            assert_relative_eq!(var, 1.0, epsilon = 1e-9);
        }
        // Column mismatch is an error.
        let other = FeatureMatrix::new(vec!["z".to_string()], vec![vec![1.0]], vec![0]);
        assert!(matches!(
            pt.apply(&other),
            Err(Error::ColumnMismatch { .. })
        ));
    }

    #[test]
    fn power_transform_json_round_trips() {
        let train = FeatureMatrix::new(
            vec!["a".to_string()],
            vec![vec![0.0], vec![1.0], vec![4.0]],
            vec![0, 1, 0],
        );
        let pt = PowerTransform::fit(&train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pt.json");
        pt.save(&path).unwrap();
        assert_eq!(PowerTransform::load(&path).unwrap(), pt);
    }

    #[test]
    fn oversampling_balances_exactly() {
        let matrix = matrix_with_labels(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 1]);
        let balanced = random_oversample(&matrix, 5).unwrap();
        assert_eq!(balanced.n_rows(), 18);
        assert_eq!(balanced.n_positive(), 9);
        // Originals all retained, in order, at the front.
        assert_eq!(&balanced.rows[..10], &matrix.rows[..]);
        // Duplicates only replicate existing minority rows.
        let minority_row = &matrix.rows[9];
        for row in &balanced.rows[10..] {
            assert_eq!(row, minority_row);
        }
    }

    #[test]
    fn oversampling_leaves_balanced_input_alone() {
        let matrix = matrix_with_labels(&[0, 1, 0, 1]);
        let out = random_oversample(&matrix, 5).unwrap();
        assert_eq!(out, matrix);
    }

    #[test]
    fn oversampling_needs_both_classes() {
        let matrix = matrix_with_labels(&[0, 0, 0]);
        assert!(matches!(
            random_oversample(&matrix, 5),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn split_is_stratified_and_exhaustive() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 10)).collect();
        let matrix = matrix_with_labels(&labels);
        let plan = SplitPlan::new(42);
        let (train, test) = split(&matrix, &plan).unwrap();
        assert_eq!(train.n_rows(), 90);
        assert_eq!(test.n_rows(), 10);
        assert_eq!(train.n_positive(), 9);
        assert_eq!(test.n_positive(), 1);
        // Disjoint and exhaustive by row id.
        let mut ids: Vec<&String> = train.row_ids.iter().chain(&test.row_ids).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 100);
    }

    #[test]
    fn split_is_deterministic() {
        let labels: Vec<u8> = (0..50).map(|i| u8::from(i % 5 == 0)).collect();
        let matrix = matrix_with_labels(&labels);
        let plan = SplitPlan::new(7);
        let (train_a, test_a) = split(&matrix, &plan).unwrap();
        let (train_b, test_b) = split(&matrix, &plan).unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);
        let other = split(&matrix, &SplitPlan::new(8)).unwrap();
        assert_ne!(other.1.row_ids, test_a.row_ids);
    }

    #[test]
    fn split_guards() {
        let tiny = matrix_with_labels(&[0, 1, 0]);
        assert!(matches!(
            split(&tiny, &SplitPlan::new(1)),
            Err(Error::TooSmall { .. })
        ));
        let single = matrix_with_labels(&[0; 20]);
        assert!(matches!(
            split(&single, &SplitPlan::new(1)),
            Err(Error::SingleClass)
        ));
        let mut bad_plan = SplitPlan::new(1);
        bad_plan.train_fraction = 1.5;
        let ok = matrix_with_labels(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        assert!(matches!(
            split(&ok, &bad_plan),
            Err(Error::InvalidConfig(_))
        ));
    }
}
