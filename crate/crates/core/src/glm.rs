//! Logistic regression with inference: IRLS fitting, Wald odds-ratio
//! tables, univariate screens, and likelihood-ratio forward selection.
//!
//! The solver is Newton/IRLS with a tiny ridge (default 1e-8) and step
//! halving, which keeps rare-outcome and quasi-separated designs from
//! blowing up; separation shows up as a `converged: false` flag rather
//! than an error. Standard errors come from the inverse observed
//! information at the optimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::featurize::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 100,
            tol: 1e-8,
            ridge: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Feature names, excluding the intercept.
    pub feature_names: Vec<String>,
    /// Coefficients in log-odds units: `[intercept, features...]`.
    pub beta: Vec<f64>,
    /// Inverse observed information at the optimum.
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub n_iterations: usize,
    /// Unpenalized log-likelihood at the optimum.
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRow {
    pub feature: String,
    pub or: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

// ---------------------------------------------------------------------------
// numerics
// ---------------------------------------------------------------------------

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^eta), stable for large |eta|.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn log_likelihood(design: &[Vec<f64>], y: &[u8], beta: &[f64]) -> f64 {
    design
        .iter()
        .zip(y)
        .map(|(row, &label)| {
            let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
            f64::from(label) * eta - log1p_exp(eta)
        })
        .sum()
}

/// In-place Cholesky factorization (lower triangle). Fails on a
/// non-positive pivot.
#[allow(clippy::needless_range_loop)]
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * z[k];
        }
        z[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = z[i];
        for k in (i + 1)..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    x
}

#[allow(clippy::needless_range_loop)]
fn chol_inverse(l: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = l.len();
    let mut inv = vec![vec![0.0; n]; n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = chol_solve(l, &e);
        for row in 0..n {
            inv[row][col] = x[row];
        }
    }
    // Symmetrize against round-off.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (inv[i][j] + inv[j][i]);
            inv[i][j] = v;
            inv[j][i] = v;
        }
    }
    inv
}

fn two_sided_p(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Survival function of chi-squared with 1 degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let chi2 = ChiSquared::new(1.0).expect("valid dof");
    (1.0 - chi2.cdf(x)).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// fitting
// ---------------------------------------------------------------------------

fn design_from(matrix: &FeatureMatrix) -> Vec<Vec<f64>> {
    matrix
        .rows
        .iter()
        .map(|r| {
            let mut row = Vec::with_capacity(r.len() + 1);
            row.push(1.0);
            row.extend_from_slice(r);
            row
        })
        .collect()
}

/// Unpenalized log-likelihood at `beta` (`[intercept, features...]`).
/// Diagnostic companion to [`score_at`].
pub fn log_likelihood_at(matrix: &FeatureMatrix, beta: &[f64]) -> f64 {
    log_likelihood(&design_from(matrix), &matrix.labels, beta)
}

/// Score vector (gradient of the unpenalized log-likelihood) at `beta`.
pub fn score_at(matrix: &FeatureMatrix, beta: &[f64]) -> Vec<f64> {
    let design = design_from(matrix);
    let mut gradient = vec![0.0; beta.len()];
    for (row, &label) in design.iter().zip(&matrix.labels) {
        let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        let mu = sigmoid(eta);
        for (g, x) in gradient.iter_mut().zip(row) {
            *g += x * (f64::from(label) - mu);
        }
    }
    gradient
}

/// Fit by Newton/IRLS with ridge stabilization and step halving.
///
/// Errors with [`Error::Singular`] when a feature column is constant
/// (duplicating the intercept) or the penalized information matrix cannot
/// be factorized even after boosting the ridge.
#[allow(clippy::needless_range_loop)]
pub fn fit_logistic(matrix: &FeatureMatrix, options: &FitOptions) -> Result<LogisticModel> {
    let n = matrix.n_rows();
    let p = matrix.n_cols();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    for idx in 0..p {
        let col = matrix.column(idx);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(Error::Singular);
        }
    }
    let design = design_from(matrix);
    let y = &matrix.labels;
    let dim = p + 1;
    let mut beta = vec![0.0; dim];
    let penalized = |b: &[f64], ridge: f64| {
        log_likelihood(&design, y, b) - 0.5 * ridge * b.iter().map(|v| v * v).sum::<f64>()
    };

    let mut converged = false;
    let mut iterations = 0;
    let mut ridge = options.ridge;
    let mut last_factor: Option<Vec<Vec<f64>>> = None;
    while iterations < options.max_iter {
        iterations += 1;
        // Gradient and observed information at the current beta.
        let mut gradient = vec![0.0; dim];
        let mut info = vec![vec![0.0; dim]; dim];
        for (row, &label) in design.iter().zip(y) {
            let eta: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            let mu = sigmoid(eta);
            let w = mu * (1.0 - mu);
            let resid = f64::from(label) - mu;
            for i in 0..dim {
                gradient[i] += row[i] * resid;
                for j in 0..=i {
                    info[i][j] += w * row[i] * row[j];
                }
            }
        }
        for i in 0..dim {
            gradient[i] -= ridge * beta[i];
            info[i][i] += ridge;
            for j in 0..i {
                info[j][i] = info[i][j];
            }
        }
        let factor = loop {
            match cholesky(&info) {
                Some(l) => break l,
                None => {
                    // Collinear design: boost the ridge and retry.
                    ridge *= 100.0;
                    if ridge > 1.0 {
                        return Err(Error::Singular);
                    }
                    for (i, row) in info.iter_mut().enumerate() {
                        row[i] += ridge;
                    }
                }
            }
        };
        let delta = chol_solve(&factor, &gradient);
        last_factor = Some(factor);

        // Step halving against penalized-likelihood decreases.
        let base = penalized(&beta, ridge);
        let mut scale = 1.0;
        let mut candidate: Vec<f64>;
        let mut halvings = 0;
        loop {
            candidate = beta
                .iter()
                .zip(&delta)
                .map(|(b, d)| b + scale * d)
                .collect();
            if penalized(&candidate, ridge) >= base || halvings >= 30 {
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
        let max_step = delta.iter().map(|d| (scale * d).abs()).fold(0.0, f64::max);
        beta = candidate;
        if max_step < options.tol {
            converged = true;
            break;
        }
    }

    // Covariance from the information at the final beta.
    let mut info = vec![vec![0.0; dim]; dim];
    for row in &design {
        let eta: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
        let mu = sigmoid(eta);
        let w = mu * (1.0 - mu);
        for i in 0..dim {
            for j in 0..=i {
                info[i][j] += w * row[i] * row[j];
            }
        }
    }
    for i in 0..dim {
        info[i][i] += ridge;
        for j in 0..i {
            info[j][i] = info[i][j];
        }
    }
    let covariance = match cholesky(&info) {
        Some(l) => chol_inverse(&l),
        None => chol_inverse(&last_factor.ok_or(Error::Singular)?),
    };

    // Under (quasi-)separation the ridge makes the optimum finite and the
    // step criterion can still trip, but the result is not a trustworthy
    // MLE. Coefficients that large (|log-odds| >= 15) only arise from
    // separation, so clear the flag.
    if beta.iter().any(|b| b.abs() >= 15.0) {
        converged = false;
    }
    let log_lik = log_likelihood(&design, y, &beta);
    Ok(LogisticModel {
        feature_names: matrix.column_names.clone(),
        beta,
        covariance,
        converged,
        n_iterations: iterations,
        log_likelihood: log_lik,
    })
}

impl LogisticModel {
    pub fn intercept(&self) -> f64 {
        self.beta[0]
    }

    /// Standard error of a coefficient (0 = intercept).
    pub fn se(&self, idx: usize) -> f64 {
        self.covariance[idx][idx].max(0.0).sqrt()
    }
}

/// σ(β₀ + β·x) per row. The matrix columns must match the model's features.
pub fn predict_proba(model: &LogisticModel, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
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
            let eta = model.beta[0]
                + row
                    .iter()
                    .zip(&model.beta[1..])
                    .map(|(x, b)| x * b)
                    .sum::<f64>();
            sigmoid(eta)
        })
        .collect())
}

/// Wald odds-ratio rows for every feature: OR = e^β,
/// CI = e^(β ± 1.96·SE), p = 2(1 − Φ(|β/SE|)).
pub fn odds_table(model: &LogisticModel) -> Vec<OddsRow> {
    model
        .feature_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let beta = model.beta[i + 1];
            let se = model.se(i + 1);
            let z = if se > 0.0 { beta / se } else { 0.0 };
            OddsRow {
                feature: name.clone(),
                or: beta.exp(),
                ci_low: (beta - 1.96 * se).exp(),
                ci_high: (beta + 1.96 * se).exp(),
                p_value: two_sided_p(z),
            }
        })
        .collect()
}

/// One single-predictor fit per feature. Failures (e.g. a constant
/// column) are recorded per row, not fatal.
pub fn univariate_screen(
    matrix: &FeatureMatrix,
    options: &FitOptions,
) -> Vec<(String, std::result::Result<OddsRow, String>)> {
    matrix
        .column_names
        .par_iter()
        .map(|name| {
            let outcome = matrix
                .select_columns(std::slice::from_ref(name))
                .and_then(|sub| fit_logistic(&sub, options))
                .map(|model| odds_table(&model).remove(0))
                .map_err(|e| e.to_string());
            (name.clone(), outcome)
        })
        .collect()
}

/// Greedy forward selection by likelihood-ratio test.
///
/// Repeatedly adds the candidate with the largest likelihood improvement
/// whose LR-test p-value beats `entry_p`; stops when no candidate
/// qualifies. Exact ties go to the lexicographically first feature name.
pub fn forward_select(
    matrix: &FeatureMatrix,
    entry_p: f64,
    options: &FitOptions,
) -> Result<(Vec<String>, LogisticModel)> {
    let empty = matrix.select_columns(&[])?;
    let mut current_model = fit_logistic(&empty, options)?;
    let mut selected: Vec<String> = Vec::new();
    let mut remaining: Vec<String> = {
        let mut names = matrix.column_names.clone();
        names.sort();
        names
    };

    loop {
        let mut best: Option<(f64, String, LogisticModel)> = None;
        for name in &remaining {
            let mut columns = selected.clone();
            columns.push(name.clone());
            let Ok(candidate) = matrix
                .select_columns(&columns)
                .and_then(|sub| fit_logistic(&sub, options))
            else {
                continue;
            };
            let improvement = 2.0 * (candidate.log_likelihood - current_model.log_likelihood);
            if best.as_ref().is_none_or(|(b, _, _)| improvement > *b) {
                best = Some((improvement, name.clone(), candidate));
            }
        }
        match best {
            Some((improvement, name, model)) if chi2_1_sf(improvement) < entry_p => {
                selected.push(name.clone());
                remaining.retain(|n| n != &name);
                current_model = model;
            }
            _ => break,
        }
    }
    Ok((selected, current_model))
}
