//! Feature aggregation over cohort members' observation windows.
//!
//! Dynamic columns count a member's in-window events per category; a
//! category with a multi-claim case rule contributes its count only when
//! the rule is satisfied inside the window. Static columns are a male
//! indicator and a one-hot age band computed at the member's window end.
//! Dichotomous mode thresholds the dynamic counts to 0/1.

use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codemap::CodeMap;
use crate::cohort::{member_events, Cohort};
use crate::error::{Error, Result};
use crate::events::{EventStore, Sex};
use crate::report::{fmt_g6, ReportFormat, Table};

// ---------------------------------------------------------------------------
// matrix
// ---------------------------------------------------------------------------

/// Named-column numeric matrix with labels and per-row provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// 0/1 outcome labels, one per row.
    pub labels: Vec<u8>,
    pub row_ids: Vec<String>,
    /// Observation window per row, when built by [`featurize`].
    pub row_windows: Vec<(NaiveDate, NaiveDate)>,
    /// Leading columns holding event counts; dichotomization applies only
    /// to these.
    pub n_dynamic: usize,
}

impl FeatureMatrix {
    /// Build a bare matrix (tests, loaded files): every column is treated
    /// as dynamic and row ids are synthesized when empty.
    pub fn new(column_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> FeatureMatrix {
        let n_dynamic = column_names.len();
        let row_ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        FeatureMatrix {
            column_names,
            rows,
            labels,
            row_ids,
            row_windows: Vec::new(),
            n_dynamic,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    /// Copy of the matrix keeping only the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureMatrix> {
        let indices: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n).ok_or_else(|| Error::ColumnMismatch {
                    expected: names.to_vec(),
                    got: self.column_names.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(FeatureMatrix {
            column_names: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| indices.iter().map(|&i| r[i]).collect())
                .collect(),
            labels: self.labels.clone(),
            row_ids: self.row_ids.clone(),
            row_windows: self.row_windows.clone(),
            n_dynamic: names.len(),
        })
    }

    /// Copy keeping only the given row indices (ascending order expected).
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            column_names: self.column_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
            row_windows: if self.row_windows.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| self.row_windows[i]).collect()
            },
            n_dynamic: self.n_dynamic,
        }
    }

    /// Threshold dynamic counts to 0/1, leaving static columns alone.
    pub fn dichotomize(&self, threshold: u32) -> FeatureMatrix {
        let mut out = self.clone();
        for row in &mut out.rows {
            for value in row.iter_mut().take(self.n_dynamic) {
                *value = if *value >= threshold as f64 { 1.0 } else { 0.0 };
            }
        }
        out
    }

    /// SHA-256 over a canonical byte serialization; used to prove the test
    /// split is untouched by training.
    pub fn bytes_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.column_names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        for ((row, label), id) in self.rows.iter().zip(&self.labels).zip(&self.row_ids) {
            hasher.update(id.as_bytes());
            hasher.update([0u8, *label]);
            for v in row {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Render as CSV: `person_id,<columns...>,label`. Integral values print
    /// exactly; everything else uses `%.6g`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("person_id,");
        out.push_str(&self.column_names.join(","));
        out.push_str(",label\n");
        for ((row, label), id) in self.rows.iter().zip(&self.labels).zip(&self.row_ids) {
            out.push_str(id);
            for v in row {
                out.push(',');
                out.push_str(&render_value(*v));
            }
            out.push_str(&format!(",{label}\n"));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::events::write_file(path, self.to_csv().as_bytes())
    }

    pub fn load(path: &Path) -> Result<FeatureMatrix> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(file.clone(), e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::SchemaError {
            file: file.clone(),
            row: 1,
            msg: "empty file".to_string(),
        })?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.first() != Some(&"person_id")
            || fields.last() != Some(&"label")
            || fields.len() < 3
        {
            return Err(Error::SchemaError {
                file,
                row: 1,
                msg: "expected header person_id,<columns...>,label".to_string(),
            });
        }
        let column_names: Vec<String> = fields[1..fields.len() - 1]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut row_ids = Vec::new();
        for (i, line) in lines.enumerate() {
            let row_no = i + 2;
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != fields.len() {
                return Err(Error::SchemaError {
                    file,
                    row: row_no,
                    msg: format!("expected {} fields, got {}", fields.len(), cells.len()),
                });
            }
            row_ids.push(cells[0].to_string());
            let values: Vec<f64> = cells[1..cells.len() - 1]
                .iter()
                .map(|c| {
                    c.parse::<f64>().map_err(|_| Error::SchemaError {
                        file: file.clone(),
                        row: row_no,
                        msg: format!("bad number {c:?}"),
                    })
                })
                .collect::<Result<_>>()?;
            rows.push(values);
            let label: u8 = cells[cells.len() - 1]
                .parse()
                .map_err(|_| Error::SchemaError {
                    file: file.clone(),
                    row: row_no,
                    msg: format!("bad label {:?}", cells[cells.len() - 1]),
                })?;
            if label > 1 {
                return Err(Error::SchemaError {
                    file,
                    row: row_no,
                    msg: format!("label must be 0 or 1, got {label}"),
                });
            }
            labels.push(label);
        }
        let n_dynamic = column_names.len();
        Ok(FeatureMatrix {
            column_names,
            rows,
            labels,
            row_ids,
            row_windows: Vec::new(),
            n_dynamic,
        })
    }
}

fn render_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        fmt_g6(v)
    }
}

// ---------------------------------------------------------------------------
// featurization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMode {
    /// Raw in-window event counts.
    Multivariable,
    /// Counts thresholded to 0/1.
    Dichotomous,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "multivariable" => Ok(FeatureMode::Multivariable),
            "dichotomous" => Ok(FeatureMode::Dichotomous),
            _ => Err(Error::Format(format!("unknown feature mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    /// Dynamic categories, in column order. Must not include outcomes.
    pub categories: Vec<String>,
    pub include_static: bool,
    pub mode: FeatureMode,
    pub dichotomize_threshold: u32,
}

impl FeatureSpec {
    /// All non-outcome categories of the map, with static columns.
    pub fn all_features(codemap: &CodeMap, mode: FeatureMode) -> FeatureSpec {
        FeatureSpec {
            categories: codemap.feature_categories(),
            include_static: true,
            mode,
            dichotomize_threshold: 1,
        }
    }
}

pub const STATIC_COLUMNS: [&str; 6] = [
    "sex_male",
    "age_18_29",
    "age_30_39",
    "age_40_49",
    "age_50_59",
    "age_60_plus",
];

/// Age bands used for the one-hot static columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgeBin {
    A18to29,
    A30to39,
    A40to49,
    A50to59,
    A60plus,
}

impl AgeBin {
    pub fn one_hot_index(self) -> usize {
        match self {
            AgeBin::A18to29 => 0,
            AgeBin::A30to39 => 1,
            AgeBin::A40to49 => 2,
            AgeBin::A50to59 => 3,
            AgeBin::A60plus => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgeBin::A18to29 => "18-29",
            AgeBin::A30to39 => "30-39",
            AgeBin::A40to49 => "40-49",
            AgeBin::A50to59 => "50-59",
            AgeBin::A60plus => "60+",
        }
    }
}

/// Bin an adult age. Ages below 18 are out of range.
pub fn age_category(age_years: i32) -> Result<AgeBin> {
    match age_years {
        i32::MIN..=17 => Err(Error::OutOfRange(age_years)),
        18..=29 => Ok(AgeBin::A18to29),
        30..=39 => Ok(AgeBin::A30to39),
        40..=49 => Ok(AgeBin::A40to49),
        50..=59 => Ok(AgeBin::A50to59),
        _ => Ok(AgeBin::A60plus),
    }
}

/// Aggregate each member's visible events into a feature matrix.
///
/// Rows follow `cohort.members` order. Column order is the spec's category
/// order followed by [`STATIC_COLUMNS`] when enabled.
pub fn featurize(
    store: &EventStore,
    cohort: &Cohort,
    codemap: &CodeMap,
    spec: &FeatureSpec,
) -> Result<FeatureMatrix> {
    let mut rules = Vec::with_capacity(spec.categories.len());
    for name in &spec.categories {
        if codemap.outcome_categories.contains(name) {
            return Err(Error::Format(format!(
                "category {name:?} is an outcome and cannot be a feature"
            )));
        }
        rules.push(codemap.require_category(name)?);
    }
    for member in &cohort.members {
        if store.person(&member.person_id).is_err() {
            return Err(Error::CohortStoreMismatch(member.person_id.clone()));
        }
    }

    let mut column_names: Vec<String> = spec.categories.clone();
    if spec.include_static {
        column_names.extend(STATIC_COLUMNS.iter().map(|s| s.to_string()));
    }
    let n_dynamic = spec.categories.len();

    let rows: Vec<Vec<f64>> = cohort
        .members
        .par_iter()
        .map(|member| -> Result<Vec<f64>> {
            let mut row = Vec::with_capacity(column_names.len());
            for rule in &rules {
                let dates: Vec<NaiveDate> = member_events(store, member)?
                    .filter(|e| rule.matches_event(e.code_system, &e.code, e.source))
                    .map(|e| e.date)
                    .collect();
                let count = match rule.first_satisfied(&dates)? {
                    Some(_) => dates.len() as f64,
                    None => 0.0,
                };
                row.push(count);
            }
            if spec.include_static {
                let person = store.person(&member.person_id)?;
                row.push(if person.sex == Sex::M { 1.0 } else { 0.0 });
                let age = member.obs_end.year() - person.birth_year;
                let bin = age_category(age)?;
                let mut one_hot = [0.0; 5];
                one_hot[bin.one_hot_index()] = 1.0;
                row.extend_from_slice(&one_hot);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let matrix = FeatureMatrix {
        column_names,
        rows,
        labels: cohort.labels(),
        row_ids: cohort.members.iter().map(|m| m.person_id.clone()).collect(),
        row_windows: cohort
            .members
            .iter()
            .map(|m| (m.obs_start, m.obs_end))
            .collect(),
        n_dynamic,
    };
    Ok(match spec.mode {
        FeatureMode::Multivariable => matrix,
        FeatureMode::Dichotomous => matrix.dichotomize(spec.dichotomize_threshold),
    })
}

// ---------------------------------------------------------------------------
// descriptive summary
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnSummary {
    /// Count and percentage of ones, per stratum.
    Binary {
        yes: (usize, f64),
        no: (usize, f64),
        total: (usize, f64),
    },
    /// Median and IQR, per stratum (empty stratum renders blank).
    Count {
        yes: Option<(f64, f64)>,
        no: Option<(f64, f64)>,
        total: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescribeRow {
    pub feature: String,
    pub summary: ColumnSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescribeTable {
    pub n_yes: usize,
    pub n_no: usize,
    pub rows: Vec<DescribeRow>,
}

/// Type-7 quantile (linear interpolation between order statistics).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn median_iqr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let median = quantile_type7(&sorted, 0.5);
    let iqr = quantile_type7(&sorted, 0.75) - quantile_type7(&sorted, 0.25);
    Some((median, iqr))
}

/// Summarize a matrix by outcome stratum: frequency (percentage) for 0/1
/// columns, median (IQR) for count columns.
pub fn describe(matrix: &FeatureMatrix) -> Result<DescribeTable> {
    if matrix.n_rows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n_yes = matrix.n_positive();
    let n_no = matrix.n_rows() - n_yes;
    let pct = |count: usize, denom: usize| {
        if denom == 0 {
            0.0
        } else {
            100.0 * count as f64 / denom as f64
        }
    };
    let mut rows = Vec::with_capacity(matrix.n_cols());
    for (idx, name) in matrix.column_names.iter().enumerate() {
        let values = matrix.column(idx);
        let is_binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
        let summary = if is_binary {
            let count = |want: u8| {
                values
                    .iter()
                    .zip(&matrix.labels)
                    .filter(|(v, &l)| l == want && **v == 1.0)
                    .count()
            };
            let yes = count(1);
            let no = count(0);
            ColumnSummary::Binary {
                yes: (yes, pct(yes, n_yes)),
                no: (no, pct(no, n_no)),
                total: (yes + no, pct(yes + no, matrix.n_rows())),
            }
        } else {
            let stratum = |want: u8| -> Vec<f64> {
                values
                    .iter()
                    .zip(&matrix.labels)
                    .filter(|(_, &l)| l == want)
                    .map(|(v, _)| *v)
                    .collect()
            };
            ColumnSummary::Count {
                yes: median_iqr(&stratum(1)),
                no: median_iqr(&stratum(0)),
                total: median_iqr(&values).expect("non-empty"),
            }
        };
        rows.push(DescribeRow {
            feature: name.clone(),
            summary,
        });
    }
    Ok(DescribeTable { n_yes, n_no, rows })
}

impl DescribeTable {
    pub fn render(&self, format: ReportFormat) -> String {
        let mut table = Table::new(&[
            "feature", "kind", "yes_a", "yes_b", "no_a", "no_b", "total_a", "total_b",
        ]);
        table.push_row(vec![
            "_n".to_string(),
            "count".to_string(),
            self.n_yes.to_string(),
            String::new(),
            self.n_no.to_string(),
            String::new(),
            (self.n_yes + self.n_no).to_string(),
            String::new(),
        ]);
        for row in &self.rows {
            match &row.summary {
                ColumnSummary::Binary { yes, no, total } => table.push_row(vec![
                    row.feature.clone(),
                    "binary".to_string(),
                    yes.0.to_string(),
                    format!("{:.1}", yes.1),
                    no.0.to_string(),
                    format!("{:.1}", no.1),
                    total.0.to_string(),
                    format!("{:.1}", total.1),
                ]),
                ColumnSummary::Count { yes, no, total } => {
                    let cell = |v: &Option<(f64, f64)>, pick: fn((f64, f64)) -> f64| {
                        v.map(|pair| fmt_g6(pick(pair))).unwrap_or_default()
                    };
                    table.push_row(vec![
                        row.feature.clone(),
                        "count".to_string(),
                        cell(yes, |(m, _)| m),
                        cell(yes, |(_, i)| i),
                        cell(no, |(m, _)| m),
                        cell(no, |(_, i)| i),
                        fmt_g6(total.0),
                        fmt_g6(total.1),
                    ])
                }
            }
        }
        table.render(format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codemap::CodeMap;
    use crate::cohort::{build_fixed, build_flexible, FixedWindowSpec, FlexibleWindowSpec};
    use crate::synth::fixture_store;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn fixture_setup() -> (crate::events::EventStore, CodeMap) {
        (fixture_store(), CodeMap::bundled())
    }

    fn fixed_spec() -> FixedWindowSpec {
        FixedWindowSpec {
            obs_start: d(2013, 4, 1),
            index_date: d(2018, 3, 31),
            pred_end: d(2020, 3, 31),
            outcome_category: "homelessness".to_string(),
        }
    }

    #[test]
    fn age_bins_match_table_bounds() {
        assert_eq!(age_category(29).unwrap(), AgeBin::A18to29);
        assert_eq!(age_category(30).unwrap(), AgeBin::A30to39);
        assert_eq!(age_category(65).unwrap(), AgeBin::A60plus);
        assert_eq!(age_category(18).unwrap(), AgeBin::A18to29);
        assert_eq!(age_category(59).unwrap(), AgeBin::A50to59);
        assert_eq!(age_category(60).unwrap(), AgeBin::A60plus);
        assert!(matches!(age_category(17), Err(Error::OutOfRange(17))));
    }

    #[test]
    fn counts_respect_windows_and_rules() {
        let (store, map) = fixture_setup();
        let cohort = build_fixed(&store, &map, &fixed_spec()).unwrap();
        let spec = FeatureSpec::all_features(&map, FeatureMode::Multivariable);
        let matrix = featurize(&store, &cohort, &map, &spec).unwrap();

        let row_of = |id: &str| {
            let i = matrix.row_ids.iter().position(|r| r == id).unwrap();
            matrix.rows[i].clone()
        };
        let col = |name: &str| matrix.column_index(name).unwrap();

        // p1 satisfied substance (2 claims, no separation needed) and mood
        // (2 claims 70 days apart), and saw a psychiatrist once.
        let p1 = row_of("p1");
        assert_eq!(p1[col("substance_use")], 2.0);
        assert_eq!(p1[col("mood")], 2.0);
        assert_eq!(p1[col("psychiatrist_visits")], 1.0);
        assert_eq!(p1[col("sex_male")], 1.0);
        // Age 2018 - 1980 = 38.
        assert_eq!(p1[col("age_30_39")], 1.0);
        assert_eq!(p1[col("age_18_29")], 0.0);

        // p3 has a single mood claim: the two-claim rule is unsatisfied, so
        // the count is zero, not one.
        let p3 = row_of("p3");
        assert_eq!(p3[col("mood")], 0.0);
        assert_eq!(p3[col("gp_visits")], 1.0); // 2015 visit; 2019 one is after the index
    }

    #[test]
    fn dichotomous_mode_thresholds_dynamic_columns() {
        let (store, map) = fixture_setup();
        let cohort = build_fixed(&store, &map, &fixed_spec()).unwrap();
        let multi = featurize(
            &store,
            &cohort,
            &map,
            &FeatureSpec::all_features(&map, FeatureMode::Multivariable),
        )
        .unwrap();
        let dichot = featurize(
            &store,
            &cohort,
            &map,
            &FeatureSpec::all_features(&map, FeatureMode::Dichotomous),
        )
        .unwrap();
        assert_eq!(multi.dichotomize(1), dichot);
        for row in &dichot.rows {
            assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn outcome_day_events_are_invisible_for_positives() {
        let (store, map) = fixture_setup();
        let flex = FlexibleWindowSpec {
            min_history_days: 0,
            outcome_category: "homelessness".to_string(),
        };
        let cohort = build_flexible(&store, &map, &flex).unwrap();
        let spec = FeatureSpec::all_features(&map, FeatureMode::Multivariable);
        let matrix = featurize(&store, &cohort, &map, &spec).unwrap();
        // p2's GP visit (2017) is after the 2016 outcome: invisible.
        let i = matrix.row_ids.iter().position(|r| r == "p2").unwrap();
        assert_eq!(
            matrix.rows[i][matrix.column_index("gp_visits").unwrap()],
            0.0
        );
        // p4's second substance claim (2015) is after the 2014 outcome, so
        // only one claim is visible and the two-claim rule fails.
        let i = matrix.row_ids.iter().position(|r| r == "p4").unwrap();
        assert_eq!(
            matrix.rows[i][matrix.column_index("substance_use").unwrap()],
            0.0
        );
    }

    #[test]
    fn outcome_categories_are_not_features() {
        let (store, map) = fixture_setup();
        let cohort = build_fixed(&store, &map, &fixed_spec()).unwrap();
        let spec = FeatureSpec {
            categories: vec!["homelessness".to_string()],
            include_static: false,
            mode: FeatureMode::Multivariable,
            dichotomize_threshold: 1,
        };
        assert!(featurize(&store, &cohort, &map, &spec).is_err());
    }

    #[test]
    fn mismatched_cohort_is_rejected() {
        let (store, map) = fixture_setup();
        let cohort = build_fixed(&store, &map, &fixed_spec()).unwrap();
        let other = crate::events::EventStore::build(
            vec![crate::events::PersonRecord {
                person_id: "zz".to_string(),
                sex: Sex::F,
                birth_year: 1980,
            }],
            vec![],
            None,
        )
        .unwrap();
        let spec = FeatureSpec::all_features(&map, FeatureMode::Multivariable);
        assert!(matches!(
            featurize(&other, &cohort, &map, &spec),
            Err(Error::CohortStoreMismatch(_))
        ));
    }

    #[test]
    fn quantiles_are_type7() {
        let values = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_type7(&values, 0.5), 3.0);
        assert_eq!(quantile_type7(&values, 0.25), 2.0);
        assert_eq!(quantile_type7(&values, 0.75), 4.0);
        let (median, iqr) = median_iqr(&values).unwrap();
        assert_eq!(median, 3.0);
        assert_eq!(iqr, 2.0);
        // Interpolation case: four values.
        let four = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&four, 0.25), 1.75);
        assert_eq!(quantile_type7(&four, 0.5), 2.5);
    }

    #[test]
    fn describe_shapes_binary_and_count_columns() {
        let matrix = FeatureMatrix::new(
            vec!["flag".to_string(), "count".to_string()],
            vec![
                vec![1.0, 1.0],
                vec![1.0, 2.0],
                vec![1.0, 3.0],
                vec![1.0, 4.0],
                vec![1.0, 5.0],
            ],
            vec![0, 0, 0, 0, 0],
        );
        let table = describe(&matrix).unwrap();
        assert_eq!(table.n_yes, 0);
        assert_eq!(table.n_no, 5);
        match &table.rows[0].summary {
            ColumnSummary::Binary { no, .. } => {
                assert_eq!(no.0, 5);
                assert_eq!(no.1, 100.0);
            }
            other => panic!("expected binary, got {other:?}"),
        }
        match &table.rows[1].summary {
            ColumnSummary::Count { no, .. } => {
                assert_eq!(no.unwrap(), (3.0, 2.0));
            }
            other => panic!("expected count, got {other:?}"),
        }
        let rendered = table.render(ReportFormat::Csv);
        assert!(rendered.contains("flag,binary,0,0.0,5,100.0,5,100.0"));
    }

    #[test]
    fn describe_rejects_empty_matrix() {
        let matrix = FeatureMatrix::new(vec!["a".to_string()], vec![], vec![]);
        assert!(matches!(describe(&matrix), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn matrix_csv_round_trips() {
        let (store, map) = fixture_setup();
        let cohort = build_fixed(&store, &map, &fixed_spec()).unwrap();
        let spec = FeatureSpec::all_features(&map, FeatureMode::Multivariable);
        let matrix = featurize(&store, &cohort, &map, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        matrix.save(&path).unwrap();
        let loaded = FeatureMatrix::load(&path).unwrap();
        assert_eq!(loaded.column_names, matrix.column_names);
        assert_eq!(loaded.rows, matrix.rows);
        assert_eq!(loaded.labels, matrix.labels);
        assert_eq!(loaded.row_ids, matrix.row_ids);
    }

    #[test]
    fn removing_a_category_zeroes_exactly_its_column() {
        // Disjoint exact-token categories (a synthetic corpus) so the
        // removal cannot bleed into an overlapping category.
        use crate::synth::{generate, CategorySpec, SynthConfig};
        let config = SynthConfig {
            n_persons: 300,
            date_range: (d(2013, 4, 1), d(2020, 3, 31)),
            category_specs: vec![
                CategorySpec {
                    name: "background".to_string(),
                    prevalence: 1.0,
                    mean_events_per_year: 6.0,
                },
                CategorySpec {
                    name: "cat_a".to_string(),
                    prevalence: 0.5,
                    mean_events_per_year: 4.0,
                },
            ],
            true_beta: Default::default(),
            intercept: -9.0,
            interaction_terms: vec![],
            outcome_category: "outcome".to_string(),
        };
        let map = config.derive_codemap();
        let (persons, events, _) = generate(&config, 31).unwrap();
        let store =
            crate::events::EventStore::build(persons.clone(), events.clone(), None).unwrap();
        let flex = crate::cohort::FlexibleWindowSpec {
            min_history_days: 0,
            outcome_category: "outcome".to_string(),
        };
        let cohort = build_flexible(&store, &map, &flex).unwrap();
        let spec = FeatureSpec::all_features(&map, FeatureMode::Multivariable);
        let full = featurize(&store, &cohort, &map, &spec).unwrap();

        let rule = map.category("cat_a").unwrap();
        let filtered: Vec<_> = events
            .into_iter()
            .filter(|e| !rule.matches_event(e.code_system, &e.code, e.source))
            .collect();
        let stripped_store = crate::events::EventStore::build(persons, filtered, None).unwrap();
        let stripped = featurize(&stripped_store, &cohort, &map, &spec).unwrap();

        let col = full.column_index("cat_a").unwrap();
        for (a, b) in full.rows.iter().zip(&stripped.rows) {
            for (idx, (va, vb)) in a.iter().zip(b).enumerate() {
                if idx == col {
                    assert_eq!(*vb, 0.0);
                } else {
                    assert_eq!(va, vb, "column {idx} changed");
                }
            }
        }
    }

    #[test]
    fn column_order_is_stable() {
        let (store, map) = fixture_setup();
        let cohort = build_fixed(&store, &map, &fixed_spec()).unwrap();
        let spec = FeatureSpec::all_features(&map, FeatureMode::Multivariable);
        let a = featurize(&store, &cohort, &map, &spec).unwrap();
        let b = featurize(&store, &cohort, &map, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.column_names.ends_with(&STATIC_COLUMNS.map(String::from)));
    }
}
