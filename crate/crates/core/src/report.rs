//! Output rendering: `%.6g` numeric formatting, CSV and aligned-text tables.
//!
//! All numeric report output goes through [`fmt_g6`] so files are
//! byte-identical across runs and platforms. Lines always end with LF.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            _ => Err(crate::Error::Format(format!(
                "unknown format {s:?} (want csv|text)"
            ))),
        }
    }
}

/// Format like C's `%.6g`: 6 significant digits, scientific notation when
/// the exponent is < -4 or >= 6, trailing zeros stripped.
pub fn fmt_g6(x: f64) -> String {
    fmt_g(x, 6)
}

pub fn fmt_g(x: f64, precision: usize) -> String {
    let p = precision.max(1);
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    // Decimal exponent after rounding to p significant digits.
    let formatted = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = formatted.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("valid exponent");
    if exp < -4 || exp >= p as i32 {
        let mantissa = strip_trailing_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            strip_trailing_zeros(&fixed).to_string()
        } else {
            fixed
        }
    }
}

fn strip_trailing_zeros(s: &str) -> &str {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.')
}

/// A simple rectangular table with a header, rendered as CSV or as an
/// aligned text table.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.render_csv(),
            ReportFormat::Text => self.render_text(),
        }
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn render_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let render_line = |cells: &[String], widths: &[usize], out: &mut String| {
            let mut parts = Vec::with_capacity(cells.len());
            for (cell, w) in cells.iter().zip(widths) {
                parts.push(format!("{cell:<w$}"));
            }
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        render_line(&self.columns, &widths, &mut out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("  "));
        for row in &self.rows {
            render_line(row, &widths, &mut out);
        }
        out
    }
}
