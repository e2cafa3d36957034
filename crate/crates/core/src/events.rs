//! Person and event ingestion into an immutable, per-person sorted store.
//!
//! File schemas:
//! * `persons.csv` — header `person_id,sex,birth_year`
//! * `events.csv`  — header `person_id,date,source,kind,code_system,code`,
//!   dates ISO-8601 (`YYYY-MM-DD`)
//!
//! Codes are normalized at ingest. Duplicate identical event rows are kept:
//! multiple same-day visits are meaningful counts. Loading is
//! order-insensitive; timelines are sorted by
//! (date, source, kind, code_system, code).

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::codemap::{normalize_code, CaseRule, CodeMap, CodeSystem, EventSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::M => "M",
            Sex::F => "F",
        })
    }
}

impl FromStr for Sex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" | "m" => Ok(Sex::M),
            "F" | "f" => Ok(Sex::F),
            _ => Err(Error::Format(format!("unknown sex {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Diagnosis,
    Visit,
    Dispense,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Diagnosis => "diagnosis",
            EventKind::Visit => "visit",
            EventKind::Dispense => "dispense",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "diagnosis" => Ok(EventKind::Diagnosis),
            "visit" => Ok(EventKind::Visit),
            "dispense" => Ok(EventKind::Dispense),
            _ => Err(Error::Format(format!("unknown event kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub person_id: String,
    pub sex: Sex,
    pub birth_year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventRecord {
    pub person_id: String,
    pub date: NaiveDate,
    pub source: EventSource,
    pub kind: EventKind,
    pub code_system: CodeSystem,
    /// Normalized code text (or provider-specialty / drug token).
    pub code: String,
}

impl EventRecord {
    fn sort_key(&self) -> (NaiveDate, EventSource, EventKind, CodeSystem, &str) {
        (
            self.date,
            self.source,
            self.kind,
            self.code_system,
            self.code.as_str(),
        )
    }
}

/// Immutable event store: person table plus per-person ascending timelines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStore {
    persons: BTreeMap<String, PersonRecord>,
    timelines: BTreeMap<String, Vec<EventRecord>>,
    date_range: Option<(NaiveDate, NaiveDate)>,
}

impl EventStore {
    /// Build a store from in-memory records, validating and sorting.
    ///
    /// `declared_range`, when given, bounds every event date; otherwise the
    /// observed min/max is used.
    pub fn build(
        persons: Vec<PersonRecord>,
        events: Vec<EventRecord>,
        declared_range: Option<(NaiveDate, NaiveDate)>,
    ) -> Result<EventStore> {
        let mut person_map = BTreeMap::new();
        for p in persons {
            let current_year = 2100; // loose upper bound; real guard is the lower one
            if p.birth_year < 1900 || p.birth_year > current_year {
                return Err(Error::Format(format!(
                    "person {}: birth_year {} out of range",
                    p.person_id, p.birth_year
                )));
            }
            if person_map.insert(p.person_id.clone(), p.clone()).is_some() {
                return Err(Error::Format(format!(
                    "duplicate person_id {:?}",
                    p.person_id
                )));
            }
        }
        let mut timelines: BTreeMap<String, Vec<EventRecord>> = person_map
            .keys()
            .map(|id| (id.clone(), Vec::new()))
            .collect();
        for event in events {
            if !person_map.contains_key(&event.person_id) {
                return Err(Error::OrphanEvent(event.person_id));
            }
            if let Some((start, end)) = declared_range {
                if event.date < start || event.date > end {
                    return Err(Error::BadDate {
                        person_id: event.person_id,
                        date: event.date.to_string(),
                        msg: format!("outside declared range {start}..{end}"),
                    });
                }
            }
            // DIN tokens only come from PIN; provider tokens only from claims.
            match event.code_system {
                CodeSystem::Din if event.source != EventSource::Pin => {
                    return Err(Error::Format(format!(
                        "person {}: DIN code from source {}",
                        event.person_id, event.source
                    )));
                }
                CodeSystem::Provider if event.source != EventSource::Claims => {
                    return Err(Error::Format(format!(
                        "person {}: provider token from source {}",
                        event.person_id, event.source
                    )));
                }
                _ => {}
            }
            timelines.get_mut(&event.person_id).unwrap().push(event);
        }
        for timeline in timelines.values_mut() {
            timeline.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        }
        let range = declared_range.or_else(|| {
            let mut min = None;
            let mut max = None;
            for t in timelines.values() {
                if let (Some(first), Some(last)) = (t.first(), t.last()) {
                    min = Some(min.map_or(first.date, |m: NaiveDate| m.min(first.date)));
                    max = Some(max.map_or(last.date, |m: NaiveDate| m.max(last.date)));
                }
            }
            min.zip(max)
        });
        Ok(EventStore {
            persons: person_map,
            timelines,
            date_range: range,
        })
    }

    /// Load and validate `persons.csv` + `events.csv`.
    pub fn load(
        persons_path: &Path,
        events_path: &Path,
        declared_range: Option<(NaiveDate, NaiveDate)>,
    ) -> Result<EventStore> {
        let persons = read_persons_csv(persons_path)?;
        let events = read_events_csv(events_path)?;
        EventStore::build(persons, events, declared_range)
    }

    pub fn person(&self, person_id: &str) -> Result<&PersonRecord> {
        self.persons
            .get(person_id)
            .ok_or_else(|| Error::UnknownPerson(person_id.to_string()))
    }

    /// Persons in ascending id order.
    pub fn persons(&self) -> impl Iterator<Item = &PersonRecord> {
        self.persons.values()
    }

    pub fn n_persons(&self) -> usize {
        self.persons.len()
    }

    pub fn timeline(&self, person_id: &str) -> Result<&[EventRecord]> {
        self.timelines
            .get(person_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownPerson(person_id.to_string()))
    }

    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        self.date_range
    }

    pub fn first_record_date(&self, person_id: &str) -> Result<Option<NaiveDate>> {
        Ok(self.timeline(person_id)?.first().map(|e| e.date))
    }

    pub fn last_record_date(&self, person_id: &str) -> Result<Option<NaiveDate>> {
        Ok(self.timeline(person_id)?.last().map(|e| e.date))
    }

    /// Dates (ascending, with repeats) of this person's events matching a
    /// case rule.
    pub fn matching_dates(&self, person_id: &str, rule: &CaseRule) -> Result<Vec<NaiveDate>> {
        Ok(self
            .timeline(person_id)?
            .iter()
            .filter(|e| rule.matches_event(e.code_system, &e.code, e.source))
            .map(|e| e.date)
            .collect())
    }

    /// Earliest date at which the outcome category's case rule is satisfied.
    pub fn first_outcome_date(
        &self,
        person_id: &str,
        codemap: &CodeMap,
        outcome_category: &str,
    ) -> Result<Option<NaiveDate>> {
        if !codemap.outcome_categories.contains(outcome_category) {
            return Err(Error::UnknownCategory(outcome_category.to_string()));
        }
        let rule = codemap.require_category(outcome_category)?;
        let dates = self.matching_dates(person_id, rule)?;
        rule.first_satisfied(&dates)
    }

    /// Write the store back out in canonical CSV form (sorted persons,
    /// sorted timelines). Byte-stable: save(load(save(s))) == save(s).
    pub fn save(&self, persons_path: &Path, events_path: &Path) -> Result<()> {
        let mut persons_out = String::from("person_id,sex,birth_year\n");
        for p in self.persons.values() {
            persons_out.push_str(&format!("{},{},{}\n", p.person_id, p.sex, p.birth_year));
        }
        write_file(persons_path, persons_out.as_bytes())?;

        let mut events_out = String::from("person_id,date,source,kind,code_system,code\n");
        for timeline in self.timelines.values() {
            for e in timeline {
                events_out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    e.person_id, e.date, e.source, e.kind, e.code_system, e.code
                ));
            }
        }
        write_file(events_path, events_out.as_bytes())
    }
}

/// Create/overwrite a file with exact bytes (LF endings preserved).
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_persons_csv(path: &Path) -> Result<Vec<PersonRecord>> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::SchemaError {
            file: file.clone(),
            row: 0,
            msg: e.to_string(),
        })?;
    expect_headers(&mut reader, &["person_id", "sex", "birth_year"], &file)?;
    let mut persons = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::SchemaError {
            file: file.clone(),
            row,
            msg: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(Error::SchemaError {
                file,
                row,
                msg: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let sex = Sex::from_str(&record[1]).map_err(|e| Error::SchemaError {
            file: file.clone(),
            row,
            msg: e.to_string(),
        })?;
        let birth_year: i32 = record[2].parse().map_err(|_| Error::SchemaError {
            file: file.clone(),
            row,
            msg: format!("bad birth_year {:?}", &record[2]),
        })?;
        persons.push(PersonRecord {
            person_id: record[0].to_string(),
            sex,
            birth_year,
        });
    }
    Ok(persons)
}

fn read_events_csv(path: &Path) -> Result<Vec<EventRecord>> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::SchemaError {
            file: file.clone(),
            row: 0,
            msg: e.to_string(),
        })?;
    expect_headers(
        &mut reader,
        &["person_id", "date", "source", "kind", "code_system", "code"],
        &file,
    )?;
    let mut events = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::SchemaError {
            file: file.clone(),
            row,
            msg: e.to_string(),
        })?;
        if record.len() != 6 {
            return Err(Error::SchemaError {
                file,
                row,
                msg: format!("expected 6 fields, got {}", record.len()),
            });
        }
        let person_id = record[0].to_string();
        let date =
            NaiveDate::parse_from_str(&record[1], "%Y-%m-%d").map_err(|_| Error::BadDate {
                person_id: person_id.clone(),
                date: record[1].to_string(),
                msg: "expected YYYY-MM-DD".to_string(),
            })?;
        let source = EventSource::from_str(&record[2]).map_err(|e| Error::SchemaError {
            file: file.clone(),
            row,
            msg: e.to_string(),
        })?;
        let kind = EventKind::from_str(&record[3]).map_err(|e| Error::SchemaError {
            file: file.clone(),
            row,
            msg: e.to_string(),
        })?;
        let code_system = CodeSystem::from_str(&record[4]).map_err(|e| Error::SchemaError {
            file: file.clone(),
            row,
            msg: e.to_string(),
        })?;
        let code = normalize_code(&record[5], code_system).map_err(|e| Error::SchemaError {
            file: file.clone(),
            row,
            msg: e.to_string(),
        })?;
        events.push(EventRecord {
            person_id,
            date,
            source,
            kind,
            code_system,
            code: code.text().to_string(),
        });
    }
    Ok(events)
}

fn expect_headers<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    expected: &[&str],
    file: &str,
) -> Result<()> {
    let headers = reader.headers().map_err(|e| Error::SchemaError {
        file: file.to_string(),
        row: 1,
        msg: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::SchemaError {
            file: file.to_string(),
            row: 1,
            msg: format!("expected header {expected:?}, got {got:?}"),
        });
    }
    Ok(())
}
