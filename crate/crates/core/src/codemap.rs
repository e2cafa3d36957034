//! Diagnostic-code patterns and temporal case definitions.
//!
//! A code map assigns normalized diagnostic codes (and provider-specialty or
//! drug tokens) to named categories. Each category carries a [`CaseRule`]: a
//! set of patterns plus an optional multi-claim temporal predicate such as
//! "2 claims at least 30 days apart within 2 years".
//!
//! # Codemap file format
//!
//! Line-oriented UTF-8. Blank lines and lines starting with `#` are ignored.
//! A category starts with an unindented header and is followed by indented
//! pattern lines:
//!
//! ```text
//! category <name> [outcome] [source=DAD|NACRS|CLAIMS|PIN] [claims=<k>] [sep=<days>] [within=<days>]
//!   icd9: <pattern>, <pattern>, ...
//!   icd10: <pattern>, ...
//!   provider: GP, PSYC, ...
//!   din: <token>, ...
//! ```
//!
//! * `<name>` is `[A-Za-z0-9_]+` and must be unique.
//! * `outcome` marks the category as an outcome (label source) rather than a
//!   feature.
//! * `source=` restricts matching to events from the listed sources
//!   (`|`-separated). Absent means any source.
//! * `claims`/`sep`/`within` default to 1 / 0 / 730. `claims=1` requires
//!   `sep=0`; `within` must be >= `sep` and >= 1.
//! * A pattern is one comma-free token: `Z590` (exact), `F31.X` (prefix),
//!   or `F10-F19` (range; `-`, `–` and `—` all accepted, endpoints may carry
//!   a `.X` suffix).
//!
//! Code text is compared dot-stripped and uppercased, because source tables
//! mix spellings like `e97.0` and `E970`. Range matching compares the code's
//! numeric part truncated to the endpoints' width, left-padded with zeros,
//! so that e.g. `F2` vs `F20` is unambiguous and `E9761` falls inside
//! `E970-E976` by prefix containment.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Text of the bundled default code map (administrative mental-health
/// categories, homelessness and police-interaction outcomes, and
/// provider-specialty visit categories).
pub const DEFAULT_CODEMAP_TEXT: &str = include_str!("../data/default.codemap");

// ---------------------------------------------------------------------------
// vocabulary enums
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CodeSystem {
    Icd9,
    Icd10,
    /// Provider-specialty tokens on practitioner claims (GP, PSYC, ...).
    Provider,
    /// Drug dispensation tokens.
    Din,
}

impl CodeSystem {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeSystem::Icd9 => "ICD9",
            CodeSystem::Icd10 => "ICD10",
            CodeSystem::Provider => "PROVIDER",
            CodeSystem::Din => "DIN",
        }
    }
}

impl fmt::Display for CodeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodeSystem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ICD9" => Ok(CodeSystem::Icd9),
            "ICD10" => Ok(CodeSystem::Icd10),
            "PROVIDER" => Ok(CodeSystem::Provider),
            "DIN" => Ok(CodeSystem::Din),
            _ => Err(Error::Format(format!("unknown code system {s:?}"))),
        }
    }
}

/// Administrative data source an event was recorded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventSource {
    Dad,
    Nacrs,
    Claims,
    Pin,
}

impl EventSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EventSource::Dad => "DAD",
            EventSource::Nacrs => "NACRS",
            EventSource::Claims => "CLAIMS",
            EventSource::Pin => "PIN",
        }
    }
}

impl fmt::Display for EventSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DAD" => Ok(EventSource::Dad),
            "NACRS" => Ok(EventSource::Nacrs),
            "CLAIMS" => Ok(EventSource::Claims),
            "PIN" => Ok(EventSource::Pin),
            _ => Err(Error::Format(format!("unknown event source {s:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// normalized codes
// ---------------------------------------------------------------------------

/// A diagnostic code in canonical spelling: uppercase alphanumerics with
/// dots and whitespace removed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NormalizedCode {
    pub system: CodeSystem,
    text: String,
}

impl NormalizedCode {
    pub fn text(&self) -> &str {
        &self.text
    }
}

impl fmt::Display for NormalizedCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Canonicalize a raw code spelling: strip dots and whitespace, uppercase.
///
/// Rejects blank input and any character outside `[A-Za-z0-9. ]`.
pub fn normalize_code(raw: &str, system: CodeSystem) -> Result<NormalizedCode> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(Error::EmptyCode);
    }
    let mut text = String::with_capacity(trimmed.len());
    for ch in trimmed.chars() {
        if ch.is_ascii_alphanumeric() {
            text.push(ch.to_ascii_uppercase());
        } else if ch == '.' || ch == ' ' {
            continue;
        } else {
            return Err(Error::IllegalCharacter {
                raw: raw.to_string(),
                ch,
            });
        }
    }
    if text.is_empty() {
        return Err(Error::EmptyCode);
    }
    Ok(NormalizedCode { system, text })
}

/// Split canonical code text into its leading alphabetic stem and the rest.
fn split_stem(text: &str) -> (&str, &str) {
    let idx = text
        .find(|c: char| !c.is_ascii_alphabetic())
        .unwrap_or(text.len());
    text.split_at(idx)
}

// ---------------------------------------------------------------------------
// patterns
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternKind {
    /// Matches the code exactly.
    Exact(String),
    /// Matches any code starting with the stem (written `F31.X`).
    Prefix(String),
    /// Matches codes whose stem equals `stem` and whose numeric part,
    /// truncated to the endpoints' width and zero-padded, lies in
    /// `[lo, hi]`. `lo`/`hi` are stored zero-padded to a common width.
    Range {
        stem: String,
        lo: String,
        hi: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodePattern {
    pub system: CodeSystem,
    pub kind: PatternKind,
}

impl CodePattern {
    /// Whether `code` falls under this pattern. Total: a system mismatch is
    /// simply no match.
    pub fn matches(&self, code: &NormalizedCode) -> bool {
        if code.system != self.system {
            return false;
        }
        self.matches_text(code.text())
    }

    pub(crate) fn matches_text(&self, text: &str) -> bool {
        match &self.kind {
            PatternKind::Exact(t) => text == t,
            PatternKind::Prefix(stem) => text.starts_with(stem.as_str()),
            PatternKind::Range { stem, lo, hi } => {
                let (cstem, rest) = split_stem(text);
                if cstem != stem || rest.is_empty() {
                    return false;
                }
                let width = lo.len();
                let key: String = if rest.len() >= width {
                    rest[..width].to_string()
                } else {
                    format!("{rest:0>width$}")
                };
                lo.as_str() <= key.as_str() && key.as_str() <= hi.as_str()
            }
        }
    }

    /// Render in codemap-file notation.
    pub fn to_token(&self) -> String {
        match &self.kind {
            PatternKind::Exact(t) => t.clone(),
            PatternKind::Prefix(stem) => format!("{stem}.X"),
            PatternKind::Range { stem, lo, hi } => format!("{stem}{lo}-{stem}{hi}"),
        }
    }
}

/// Parse one comma-free pattern token.
///
/// `.X` suffix means prefix; any of `-`, `–`, `—` splits a range; anything
/// else is an exact code.
pub fn parse_pattern(text: &str, system: CodeSystem) -> Result<CodePattern> {
    let token = text.trim();
    if token.is_empty() {
        return Err(Error::EmptyCode);
    }
    if let Some((lo_raw, hi_raw)) = split_range(token) {
        let lo = strip_prefix_marker(lo_raw);
        let hi = strip_prefix_marker(hi_raw);
        let lo = normalize_code(lo, system)?;
        let hi = normalize_code(hi, system)?;
        let (lo_stem, lo_num) = split_stem(lo.text());
        let (hi_stem, hi_num) = split_stem(hi.text());
        if lo_stem != hi_stem {
            return Err(Error::MalformedRange {
                text: token.to_string(),
                reason: format!("endpoint stems differ ({lo_stem:?} vs {hi_stem:?})"),
            });
        }
        if lo_num.is_empty() || hi_num.is_empty() {
            return Err(Error::MalformedRange {
                text: token.to_string(),
                reason: "endpoints need a numeric part".to_string(),
            });
        }
        if !lo_num.bytes().all(|b| b.is_ascii_digit())
            || !hi_num.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(Error::MalformedRange {
                text: token.to_string(),
                reason: "endpoint numeric parts must be digits".to_string(),
            });
        }
        let width = lo_num.len().max(hi_num.len());
        let lo_pad = format!("{lo_num:0>width$}");
        let hi_pad = format!("{hi_num:0>width$}");
        if lo_pad > hi_pad {
            return Err(Error::MalformedRange {
                text: token.to_string(),
                reason: "lower endpoint exceeds upper endpoint".to_string(),
            });
        }
        return Ok(CodePattern {
            system,
            kind: PatternKind::Range {
                stem: lo_stem.to_string(),
                lo: lo_pad,
                hi: hi_pad,
            },
        });
    }
    if let Some(stem) = token
        .strip_suffix(".X")
        .or_else(|| token.strip_suffix(".x"))
    {
        let stem = normalize_code(stem, system)?;
        return Ok(CodePattern {
            system,
            kind: PatternKind::Prefix(stem.text().to_string()),
        });
    }
    let code = normalize_code(token, system)?;
    Ok(CodePattern {
        system,
        kind: PatternKind::Exact(code.text().to_string()),
    })
}

fn split_range(token: &str) -> Option<(&str, &str)> {
    for dash in ['-', '–', '—'] {
        if let Some(idx) = token.find(dash) {
            let (lo, hi) = token.split_at(idx);
            return Some((lo, &hi[dash.len_utf8()..]));
        }
    }
    None
}

fn strip_prefix_marker(endpoint: &str) -> &str {
    let e = endpoint.trim();
    e.strip_suffix(".X")
        .or_else(|| e.strip_suffix(".x"))
        .unwrap_or(e)
}

// ---------------------------------------------------------------------------
// case rules
// ---------------------------------------------------------------------------

/// A category definition: patterns plus the temporal claim rule that
/// establishes the category as present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRule {
    pub category_name: String,
    pub patterns: Vec<CodePattern>,
    /// Number of matching claims required (>= 1).
    pub min_claims: u32,
    /// Minimum days between consecutive qualifying claims (0 when
    /// `min_claims` is 1).
    pub min_separation_days: i64,
    /// All qualifying claims must fall within this many days.
    pub within_days: i64,
    /// Restrict matching to events from these sources.
    pub source_filter: Option<BTreeSet<EventSource>>,
}

impl CaseRule {
    pub fn validate(&self) -> Result<()> {
        if self.min_claims < 1 {
            return Err(Error::Format(format!(
                "category {:?}: claims must be >= 1",
                self.category_name
            )));
        }
        if self.min_claims == 1 && self.min_separation_days != 0 {
            return Err(Error::Format(format!(
                "category {:?}: sep must be 0 when claims=1",
                self.category_name
            )));
        }
        if self.min_separation_days < 0 {
            return Err(Error::Format(format!(
                "category {:?}: sep must be >= 0",
                self.category_name
            )));
        }
        if self.within_days < 1 || self.within_days < self.min_separation_days {
            return Err(Error::Format(format!(
                "category {:?}: within must be >= 1 and >= sep",
                self.category_name
            )));
        }
        if self.patterns.is_empty() {
            return Err(Error::Format(format!(
                "category {:?}: no patterns",
                self.category_name
            )));
        }
        Ok(())
    }

    /// Whether an event with the given system/code/source counts toward
    /// this rule.
    pub fn matches_event(&self, system: CodeSystem, code_text: &str, source: EventSource) -> bool {
        if let Some(filter) = &self.source_filter {
            if !filter.contains(&source) {
                return false;
            }
        }
        self.patterns
            .iter()
            .any(|p| p.system == system && p.matches_text(code_text))
    }

    /// Earliest date at which the rule is satisfied over the given
    /// ascending matching-event dates, or `None`.
    ///
    /// For `min_claims = 1` that is the first date. Otherwise the rule is
    /// satisfied at the earliest date `d` that completes a chain of
    /// `min_claims` dates ending at `d`, spanning at most `within_days`,
    /// with every consecutive chain gap at least `min_separation_days`.
    pub fn first_satisfied(&self, dates: &[NaiveDate]) -> Result<Option<NaiveDate>> {
        if dates.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::UnsortedInput);
        }
        let k = self.min_claims as usize;
        if dates.len() < k {
            return Ok(None);
        }
        if k == 1 {
            return Ok(dates.first().copied());
        }
        for j in (k - 1)..dates.len() {
            let end = dates[j];
            let floor = end - chrono::Duration::days(self.within_days);
            // Greedy backward chain: repeatedly take the latest earlier date
            // at least `sep` before the current one. This maximizes chain
            // length within [floor, end] for a fixed endpoint.
            let mut chained = 1usize;
            let mut current = end;
            for i in (0..j).rev() {
                if chained >= k {
                    break;
                }
                let d = dates[i];
                if d < floor {
                    break;
                }
                if (current - d).num_days() >= self.min_separation_days {
                    chained += 1;
                    current = d;
                }
            }
            if chained >= k {
                return Ok(Some(end));
            }
        }
        Ok(None)
    }
}

// ---------------------------------------------------------------------------
// code map
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMap {
    /// Categories in file order.
    pub categories: Vec<CaseRule>,
    /// Names of categories that define outcomes rather than features.
    pub outcome_categories: BTreeSet<String>,
}

impl CodeMap {
    /// The bundled default map.
    pub fn bundled() -> CodeMap {
        CodeMap::parse(DEFAULT_CODEMAP_TEXT).expect("bundled codemap parses")
    }

    pub fn load(path: &Path) -> Result<CodeMap> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        CodeMap::parse(&text)
    }

    pub fn category(&self, name: &str) -> Option<&CaseRule> {
        self.categories.iter().find(|c| c.category_name == name)
    }

    pub fn require_category(&self, name: &str) -> Result<&CaseRule> {
        self.category(name)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))
    }

    /// Feature categories: everything that is not an outcome, in map order.
    pub fn feature_categories(&self) -> Vec<String> {
        self.categories
            .iter()
            .filter(|c| !self.outcome_categories.contains(&c.category_name))
            .map(|c| c.category_name.clone())
            .collect()
    }

    /// Parse the line-oriented codemap format.
    pub fn parse(text: &str) -> Result<CodeMap> {
        let mut categories: Vec<CaseRule> = Vec::new();
        let mut outcomes = BTreeSet::new();
        let mut current: Option<(usize, CaseRule)> = None;

        for (lineno, raw_line) in text.lines().enumerate() {
            let line_number = lineno + 1;
            let line = raw_line.trim_end();
            let trimmed = line.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let indented = line.len() != trimmed.len();
            if !indented {
                if let Some((header_line, rule)) = current.take() {
                    finish_category(rule, header_line, &mut categories)?;
                }
                let (rule, is_outcome) = parse_header(trimmed, line_number)?;
                if is_outcome {
                    outcomes.insert(rule.category_name.clone());
                }
                current = Some((line_number, rule));
            } else {
                let Some((_, rule)) = current.as_mut() else {
                    return Err(Error::ParseError {
                        line: line_number,
                        col: line.len() - trimmed.len() + 1,
                        msg: "pattern line outside any category".to_string(),
                    });
                };
                parse_pattern_line(trimmed, line_number, rule)?;
            }
        }
        if let Some((header_line, rule)) = current.take() {
            finish_category(rule, header_line, &mut categories)?;
        }
        if categories.is_empty() {
            return Err(Error::ParseError {
                line: 1,
                col: 1,
                msg: "no categories defined".to_string(),
            });
        }
        let map = CodeMap {
            categories,
            outcome_categories: outcomes,
        };
        Ok(map)
    }

    /// Render back to the file format. `parse(to_text(m))` is structurally
    /// equal to `m`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for rule in &self.categories {
            out.push_str("category ");
            out.push_str(&rule.category_name);
            if self.outcome_categories.contains(&rule.category_name) {
                out.push_str(" outcome");
            }
            if let Some(filter) = &rule.source_filter {
                let joined: Vec<&str> = filter.iter().map(|s| s.as_str()).collect();
                out.push_str(&format!(" source={}", joined.join("|")));
            }
            if rule.min_claims != 1 || rule.min_separation_days != 0 || rule.within_days != 730 {
                out.push_str(&format!(
                    " claims={} sep={} within={}",
                    rule.min_claims, rule.min_separation_days, rule.within_days
                ));
            }
            out.push('\n');
            for system in [
                CodeSystem::Icd9,
                CodeSystem::Icd10,
                CodeSystem::Provider,
                CodeSystem::Din,
            ] {
                let tokens: Vec<String> = rule
                    .patterns
                    .iter()
                    .filter(|p| p.system == system)
                    .map(|p| p.to_token())
                    .collect();
                if !tokens.is_empty() {
                    let key = match system {
                        CodeSystem::Icd9 => "icd9",
                        CodeSystem::Icd10 => "icd10",
                        CodeSystem::Provider => "provider",
                        CodeSystem::Din => "din",
                    };
                    out.push_str(&format!("  {key}: {}\n", tokens.join(", ")));
                }
            }
        }
        out
    }
}

fn finish_category(
    rule: CaseRule,
    header_line: usize,
    categories: &mut Vec<CaseRule>,
) -> Result<()> {
    rule.validate().map_err(|e| Error::ParseError {
        line: header_line,
        col: 1,
        msg: e.to_string(),
    })?;
    if categories
        .iter()
        .any(|c| c.category_name == rule.category_name)
    {
        return Err(Error::DuplicateCategory(rule.category_name));
    }
    categories.push(rule);
    Ok(())
}

fn parse_header(line: &str, line_number: usize) -> Result<(CaseRule, bool)> {
    let err = |col: usize, msg: String| Error::ParseError {
        line: line_number,
        col,
        msg,
    };
    let mut words = line.split_whitespace();
    match words.next() {
        Some("category") => {}
        other => {
            return Err(err(1, format!("expected `category`, found {other:?}")));
        }
    }
    let name = words
        .next()
        .ok_or_else(|| err(line.len(), "missing category name".to_string()))?;
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(err(1, format!("invalid category name {name:?}")));
    }
    let mut rule = CaseRule {
        category_name: name.to_string(),
        patterns: Vec::new(),
        min_claims: 1,
        min_separation_days: 0,
        within_days: 730,
        source_filter: None,
    };
    let mut is_outcome = false;
    for word in words {
        if word == "outcome" {
            is_outcome = true;
        } else if let Some(value) = word.strip_prefix("source=") {
            let mut set = BTreeSet::new();
            for token in value.split('|') {
                set.insert(EventSource::from_str(token).map_err(|e| err(1, e.to_string()))?);
            }
            rule.source_filter = Some(set);
        } else if let Some(value) = word.strip_prefix("claims=") {
            rule.min_claims = value
                .parse()
                .map_err(|_| err(1, format!("bad claims value {value:?}")))?;
        } else if let Some(value) = word.strip_prefix("sep=") {
            rule.min_separation_days = value
                .parse()
                .map_err(|_| err(1, format!("bad sep value {value:?}")))?;
        } else if let Some(value) = word.strip_prefix("within=") {
            rule.within_days = value
                .parse()
                .map_err(|_| err(1, format!("bad within value {value:?}")))?;
        } else {
            return Err(err(1, format!("unknown header option {word:?}")));
        }
    }
    Ok((rule, is_outcome))
}

fn parse_pattern_line(line: &str, line_number: usize, rule: &mut CaseRule) -> Result<()> {
    let err = |msg: String| Error::ParseError {
        line: line_number,
        col: 1,
        msg,
    };
    let (key, rest) = line
        .split_once(':')
        .ok_or_else(|| err("pattern line needs `<system>: ...`".to_string()))?;
    let system = match key.trim() {
        "icd9" => CodeSystem::Icd9,
        "icd10" => CodeSystem::Icd10,
        "provider" => CodeSystem::Provider,
        "din" => CodeSystem::Din,
        other => return Err(err(format!("unknown pattern system {other:?}"))),
    };
    let mut any = false;
    for token in rest.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let pattern = parse_pattern(token, system).map_err(|e| err(e.to_string()))?;
        rule.patterns.push(pattern);
        any = true;
    }
    if !any {
        return Err(err("pattern line lists no patterns".to_string()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
