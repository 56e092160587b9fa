use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::infer::parse_decimal;

/// Maximum number of entries in a frequency table.
pub const FREQUENCY_TABLE_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

/// Descriptive statistics over the parseable values of a numeric column.
/// `std` is the sample standard deviation (n-1 denominator, 0 for n=1);
/// quartiles use linear interpolation between closest ranks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub quartiles: Quartiles,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyEntry {
    pub value: String,
    pub count: usize,
}

impl FrequencyEntry {
    pub fn new(value: impl Into<String>, count: usize) -> Self {
        Self {
            value: value.into(),
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalStats {
    pub distinct_count: usize,
    /// Descending by count, ties broken by value; at most
    /// [`FREQUENCY_TABLE_CAP`] entries.
    pub frequency_table: Vec<FrequencyEntry>,
}

pub(crate) fn numeric_stats(non_null: &[&str]) -> Option<NumericStats> {
    let mut values: Vec<f64> = non_null.iter().filter_map(|v| parse_decimal(v)).collect();
    if values.is_empty() {
        return None;
    }

    // Welford's online update for mean and variance.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = values.len();
    let std = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };

    values.sort_by(f64::total_cmp);
    Some(NumericStats {
        min: values[0],
        max: values[n - 1],
        mean,
        std,
        quartiles: Quartiles {
            q1: quantile_sorted(&values, 0.25),
            q2: quantile_sorted(&values, 0.5),
            q3: quantile_sorted(&values, 0.75),
        },
        count: n,
    })
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    let q = a + (pos - lo as f64) * (b - a);
    q.clamp(a, b)
}

pub(crate) fn categorical_stats(non_null: &[&str]) -> CategoricalStats {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for v in non_null {
        *counts.entry(v).or_default() += 1;
    }
    let distinct_count = counts.len();
    let mut table: Vec<(&str, usize)> = counts.into_iter().collect();
    table.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    table.truncate(FREQUENCY_TABLE_CAP);
    CategoricalStats {
        distinct_count,
        frequency_table: table
            .into_iter()
            .map(|(v, c)| FrequencyEntry::new(v, c))
            .collect(),
    }
}
