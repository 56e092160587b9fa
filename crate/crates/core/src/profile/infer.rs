use std::collections::HashSet;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Numeric,
    Categorical,
    Text,
    Boolean,
    Datetime,
}

impl ColumnType {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Numeric => "numeric",
            ColumnType::Categorical => "categorical",
            ColumnType::Text => "text",
            ColumnType::Boolean => "boolean",
            ColumnType::Datetime => "datetime",
        }
    }
}

/// Null markers: empty string, `NA`, `NaN`, `null` (case-insensitive, trimmed).
pub fn is_null(raw: &str) -> bool {
    let v = raw.trim();
    v.is_empty()
        || v.eq_ignore_ascii_case("na")
        || v.eq_ignore_ascii_case("nan")
        || v.eq_ignore_ascii_case("null")
}

/// Parses a plain decimal number: optional sign, digits with an optional
/// fraction, optional exponent. `inf`, hex and thousands separators are
/// rejected.
pub fn parse_decimal(raw: &str) -> Option<f64> {
    let s = raw.trim();
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let int_digits = i - int_start;
    let mut frac_digits = 0;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let fs = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        frac_digits = i - fs;
    }
    if int_digits + frac_digits == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let es = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == es {
            return None;
        }
    }
    if i != b.len() {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_boolean_token(raw: &str) -> bool {
    matches!(
        raw.trim().to_ascii_lowercase().as_str(),
        "true" | "false" | "yes" | "no" | "0" | "1"
    )
}

pub(crate) fn is_datetime(raw: &str) -> bool {
    let s = raw.trim();
    if NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok()
        || NaiveDate::parse_from_str(s, "%d/%m/%Y").is_ok()
        || DateTime::parse_from_rfc3339(s).is_ok()
    {
        return true;
    }
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .any(|f| NaiveDateTime::parse_from_str(s, f).is_ok())
}

fn at_least_95_percent(hits: usize, total: usize) -> bool {
    total > 0 && hits * 100 >= total * 95
}

/// Type inference over the non-null values of a column with `rows` total
/// cells. Precedence: numeric, boolean, datetime, categorical, text.
///
/// A column where at least half the values parse as numbers, but fewer than
/// 95%, is dirty numeric data and stays text even when it has few distinct
/// values.
pub(crate) fn infer_type(non_null: &[&str], rows: usize) -> ColumnType {
    if non_null.is_empty() {
        return ColumnType::Text;
    }
    let total = non_null.len();
    let numeric = non_null.iter().filter(|v| parse_decimal(v).is_some()).count();
    if at_least_95_percent(numeric, total) {
        return ColumnType::Numeric;
    }
    if non_null.iter().all(|v| is_boolean_token(v)) {
        return ColumnType::Boolean;
    }
    let dates = non_null.iter().filter(|v| is_datetime(v)).count();
    if at_least_95_percent(dates, total) {
        return ColumnType::Datetime;
    }
    let mostly_numeric = numeric * 2 >= total;
    let distinct = non_null.iter().collect::<HashSet<_>>().len();
    if !mostly_numeric && distinct <= categorical_limit(rows) {
        return ColumnType::Categorical;
    }
    ColumnType::Text
}

/// `max(20, 5% of rows)`.
pub(crate) fn categorical_limit(rows: usize) -> usize {
    (rows / 20).max(20)
}
