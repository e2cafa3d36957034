//! Fixed- and flexible-observation-window cohort construction.
//!
//! The fixed scheme uses one global observation window `[obs_start,
//! index_date]` and seeks the outcome in the prediction window
//! `(index_date, pred_end]`; persons whose first outcome is on or before
//! the index date are excluded. The flexible scheme gives every person an
//! individual window from their first record to their first outcome
//! (positive) or last record (negative), subject to a minimum history
//! length; records after the window end are invisible downstream.
//!
//! Every person lands in exactly one of `members` or `exclusion_log`, so
//! exclusions are auditable.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codemap::CodeMap;
use crate::error::{Error, Result};
use crate::events::{EventRecord, EventStore};

// ---------------------------------------------------------------------------
// specs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedWindowSpec {
    pub obs_start: NaiveDate,
    /// Observation end; the prediction window is `(index_date, pred_end]`.
    pub index_date: NaiveDate,
    pub pred_end: NaiveDate,
    pub outcome_category: String,
}

impl FixedWindowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.obs_start < self.index_date && self.index_date < self.pred_end) {
            return Err(Error::InvalidConfig(format!(
                "need obs_start < index_date < pred_end, got {} / {} / {}",
                self.obs_start, self.index_date, self.pred_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlexibleWindowSpec {
    /// Minimum observation length (days) required for inclusion.
    pub min_history_days: i64,
    pub outcome_category: String,
}

impl FlexibleWindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_history_days < 0 {
            return Err(Error::InvalidConfig(format!(
                "min_history_days must be >= 0, got {}",
                self.min_history_days
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CohortSpec {
    Fixed(FixedWindowSpec),
    Flexible(FlexibleWindowSpec),
    /// Loaded from a cohort.csv; construction parameters unknown.
    Imported,
}

// ---------------------------------------------------------------------------
// members and exclusions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Positive => 1,
            Label::Negative => 0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Label::Positive),
            "negative" => Ok(Label::Negative),
            _ => Err(Error::Format(format!("unknown label {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    NoEventsInWindow,
    OutcomeBeforeIndex,
    InsufficientHistory,
    NoEventsAtAll,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::NoEventsInWindow => "no_events_in_window",
            ExclusionReason::OutcomeBeforeIndex => "outcome_before_index",
            ExclusionReason::InsufficientHistory => "insufficient_history",
            ExclusionReason::NoEventsAtAll => "no_events_at_all",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExclusionReason {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_events_in_window" => Ok(ExclusionReason::NoEventsInWindow),
            "outcome_before_index" => Ok(ExclusionReason::OutcomeBeforeIndex),
            "insufficient_history" => Ok(ExclusionReason::InsufficientHistory),
            "no_events_at_all" => Ok(ExclusionReason::NoEventsAtAll),
            _ => Err(Error::Format(format!("unknown exclusion reason {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortMember {
    pub person_id: String,
    pub label: Label,
    pub obs_start: NaiveDate,
    /// The per-person index date: first outcome (positive) or window end.
    pub obs_end: NaiveDate,
    pub history_days: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cohort {
    pub spec: CohortSpec,
    /// Members sorted by person_id.
    pub members: Vec<CohortMember>,
    /// Everyone who is not a member, with the reason.
    pub exclusion_log: BTreeMap<String, ExclusionReason>,
}

impl Cohort {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn n_positive(&self) -> usize {
        self.members
            .iter()
            .filter(|m| m.label == Label::Positive)
            .count()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.members.iter().map(|m| m.label.as_u8()).collect()
    }
}

/// Events of a member visible to downstream stages: dates in
/// `[obs_start, obs_end]` for negatives and `[obs_start, obs_end)` for
/// positives (the outcome day itself is never a feature source).
pub fn member_events<'a>(
    store: &'a EventStore,
    member: &'a CohortMember,
) -> Result<impl Iterator<Item = &'a EventRecord>> {
    let timeline = store.timeline(&member.person_id)?;
    let (start, end, label) = (member.obs_start, member.obs_end, member.label);
    Ok(timeline.iter().filter(move |e| {
        e.date >= start
            && match label {
                Label::Positive => e.date < end,
                Label::Negative => e.date <= end,
            }
    }))
}

// ---------------------------------------------------------------------------
// builders
// ---------------------------------------------------------------------------

enum Verdict {
    Member(CohortMember),
    Excluded(ExclusionReason),
}

fn assemble(spec: CohortSpec, verdicts: Vec<(String, Verdict)>) -> Cohort {
    let mut members = Vec::new();
    let mut exclusion_log = BTreeMap::new();
    for (person_id, verdict) in verdicts {
        match verdict {
            Verdict::Member(m) => members.push(m),
            Verdict::Excluded(reason) => {
                exclusion_log.insert(person_id, reason);
            }
        }
    }
    // Person iteration was already ascending, so members are sorted.
    Cohort {
        spec,
        members,
        exclusion_log,
    }
}

/// Build the fixed-window cohort.
///
/// Exclusions: no events at all; no events inside `[obs_start, index_date]`;
/// first outcome on or before the index date. A member's window starts at
/// the later of the global `obs_start` and their first record date. The
/// label is positive iff the first outcome falls in `(index_date, pred_end]`.
pub fn build_fixed(
    store: &EventStore,
    codemap: &CodeMap,
    spec: &FixedWindowSpec,
) -> Result<Cohort> {
    spec.validate()?;
    codemap.require_category(&spec.outcome_category)?;
    if !codemap.outcome_categories.contains(&spec.outcome_category) {
        return Err(Error::UnknownCategory(spec.outcome_category.clone()));
    }
    let ids: Vec<&str> = store.persons().map(|p| p.person_id.as_str()).collect();
    let verdicts: Vec<(String, Verdict)> = ids
        .par_iter()
        .map(|id| -> Result<(String, Verdict)> {
            let timeline = store.timeline(id)?;
            if timeline.is_empty() {
                return Ok((
                    id.to_string(),
                    Verdict::Excluded(ExclusionReason::NoEventsAtAll),
                ));
            }
            let in_window = timeline
                .iter()
                .any(|e| e.date >= spec.obs_start && e.date <= spec.index_date);
            if !in_window {
                return Ok((
                    id.to_string(),
                    Verdict::Excluded(ExclusionReason::NoEventsInWindow),
                ));
            }
            let first_outcome = store.first_outcome_date(id, codemap, &spec.outcome_category)?;
            if let Some(outcome) = first_outcome {
                if outcome <= spec.index_date {
                    return Ok((
                        id.to_string(),
                        Verdict::Excluded(ExclusionReason::OutcomeBeforeIndex),
                    ));
                }
            }
            let label = match first_outcome {
                Some(outcome) if outcome > spec.index_date && outcome <= spec.pred_end => {
                    Label::Positive
                }
                _ => Label::Negative,
            };
            let first_record = timeline.first().expect("non-empty").date;
            let obs_start = spec.obs_start.max(first_record);
            let obs_end = spec.index_date;
            Ok((
                id.to_string(),
                Verdict::Member(CohortMember {
                    person_id: id.to_string(),
                    label,
                    obs_start,
                    obs_end,
                    history_days: (obs_end - obs_start).num_days(),
                }),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(CohortSpec::Fixed(spec.clone()), verdicts))
}

/// Build the flexible-window cohort.
///
/// Every person's window runs from their first record to their first
/// outcome (positive) or last record (negative); persons with fewer than
/// `min_history_days` days of window are excluded, as are persons with no
/// events at all.
pub fn build_flexible(
    store: &EventStore,
    codemap: &CodeMap,
    spec: &FlexibleWindowSpec,
) -> Result<Cohort> {
    spec.validate()?;
    if !codemap.outcome_categories.contains(&spec.outcome_category) {
        return Err(Error::UnknownCategory(spec.outcome_category.clone()));
    }
    let ids: Vec<&str> = store.persons().map(|p| p.person_id.as_str()).collect();
    let verdicts: Vec<(String, Verdict)> = ids
        .par_iter()
        .map(|id| -> Result<(String, Verdict)> {
            let timeline = store.timeline(id)?;
            let (Some(first), Some(last)) = (timeline.first(), timeline.last()) else {
                return Ok((
                    id.to_string(),
                    Verdict::Excluded(ExclusionReason::NoEventsAtAll),
                ));
            };
            let first_outcome = store.first_outcome_date(id, codemap, &spec.outcome_category)?;
            let (label, obs_end) = match first_outcome {
                Some(outcome) => (Label::Positive, outcome),
                None => (Label::Negative, last.date),
            };
            let obs_start = first.date;
            let history_days = (obs_end - obs_start).num_days();
            if history_days < spec.min_history_days {
                return Ok((
                    id.to_string(),
                    Verdict::Excluded(ExclusionReason::InsufficientHistory),
                ));
            }
            Ok((
                id.to_string(),
                Verdict::Member(CohortMember {
                    person_id: id.to_string(),
                    label,
                    obs_start,
                    obs_end,
                    history_days,
                }),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(CohortSpec::Flexible(spec.clone()), verdicts))
}

/// One row of a minimum-history threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdCount {
    pub threshold: i64,
    pub n_members: usize,
    pub n_positive: usize,
}

/// Flexible-cohort membership counts at each threshold.
pub fn sweep_thresholds(
    store: &EventStore,
    codemap: &CodeMap,
    outcome_category: &str,
    thresholds: &[i64],
) -> Result<Vec<ThresholdCount>> {
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
            Ok(ThresholdCount {
                threshold,
                n_members: cohort.n_members(),
                n_positive: cohort.n_positive(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// csv round trip
// ---------------------------------------------------------------------------

pub const COHORT_CSV_HEADER: &str =
    "person_id,label,obs_start,obs_end,history_days,exclusion_reason";

impl Cohort {
    /// Render as CSV: one row per person (members and excluded alike),
    /// ascending person_id. Excluded rows have an empty label and window.
    pub fn to_csv(&self) -> String {
        #[derive(Clone)]
        enum Row<'a> {
            Member(&'a CohortMember),
            Excluded(&'a str, ExclusionReason),
        }
        let mut rows: Vec<(&str, Row)> = self
            .members
            .iter()
            .map(|m| (m.person_id.as_str(), Row::Member(m)))
            .chain(
                self.exclusion_log
                    .iter()
                    .map(|(id, &reason)| (id.as_str(), Row::Excluded(id, reason))),
            )
            .collect();
        rows.sort_by_key(|(id, _)| *id);
        let mut out = String::from(COHORT_CSV_HEADER);
        out.push('\n');
        for (_, row) in rows {
            match row {
                Row::Member(m) => {
                    out.push_str(&format!(
                        "{},{},{},{},{},\n",
                        m.person_id, m.label, m.obs_start, m.obs_end, m.history_days
                    ));
                }
                Row::Excluded(id, reason) => {
                    out.push_str(&format!("{id},,,,,{reason}\n"));
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::events::write_file(path, self.to_csv().as_bytes())
    }

    /// Read a cohort.csv back. The spec is [`CohortSpec::Imported`].
    pub fn load(path: &Path) -> Result<Cohort> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(file.clone(), e))?;
        let mut lines = text.lines();
        match lines.next() {
            Some(header) if header == COHORT_CSV_HEADER => {}
            other => {
                return Err(Error::SchemaError {
                    file,
                    row: 1,
                    msg: format!("expected header {COHORT_CSV_HEADER:?}, got {other:?}"),
                });
            }
        }
        let mut members = Vec::new();
        let mut exclusion_log = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let row = i + 2;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::SchemaError {
                    file,
                    row,
                    msg: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let person_id = fields[0].to_string();
            if fields[1].is_empty() {
                let reason =
                    ExclusionReason::from_str(fields[5]).map_err(|e| Error::SchemaError {
                        file: file.clone(),
                        row,
                        msg: e.to_string(),
                    })?;
                exclusion_log.insert(person_id, reason);
            } else {
                let parse_date = |s: &str| {
                    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| Error::SchemaError {
                        file: file.clone(),
                        row,
                        msg: format!("bad date {s:?}"),
                    })
                };
                members.push(CohortMember {
                    person_id,
                    label: Label::from_str(fields[1]).map_err(|e| Error::SchemaError {
                        file: file.clone(),
                        row,
                        msg: e.to_string(),
                    })?,
                    obs_start: parse_date(fields[2])?,
                    obs_end: parse_date(fields[3])?,
                    history_days: fields[4].parse().map_err(|_| Error::SchemaError {
                        file: file.clone(),
                        row,
                        msg: format!("bad history_days {:?}", fields[4]),
                    })?,
                });
            }
        }
        members.sort_by(|a, b| a.person_id.cmp(&b.person_id));
        Ok(Cohort {
            spec: CohortSpec::Imported,
            members,
            exclusion_log,
        })
    }
}
