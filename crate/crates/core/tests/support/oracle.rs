//! Brute-force profiler oracle over random synthetic columns.

use std::collections::BTreeMap;

use decomp_core::profile::{profile_column, ColumnType, FrequencyEntry};
use rand::seq::IndexedRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Numeric,
    Categorical,
}

pub struct Column {
    pub shape: Shape,
    pub values: Vec<String>,
}

const NULLS: &[&str] = &["", "NA", "nan", "NULL", "  "];
const NOISE: &[&str] = &["n/a?", "12 kg", "abc", "4.1 stars", "--"];

fn number(rng: &mut impl Rng) -> String {
    match rng.random_range(0..5) {
        0 => rng.random_range(-1000..1000).to_string(),
        1 => format!("{:.3}", rng.random_range(-1e4..1e4)),
        2 => format!("{:.1}", rng.random_range(0.0..5.0)),
        3 => format!("{}e{}", rng.random_range(1..99), rng.random_range(-3..4)),
        _ => format!("{}", rng.random_range(0.0..1e6)),
    }
}

pub fn random_column(rng: &mut impl Rng) -> Column {
    let n = rng.random_range(1..=1000);
    let shape = if rng.random_bool(0.5) { Shape::Numeric } else { Shape::Categorical };
    // at most 20 labels, so every categorical column stays under the distinct-count limit
    let labels: Vec<String> = (0..rng.random_range(1..=20)).map(|i| format!("label_{i}")).collect();
    let noisy = n >= 200;
    let values = (0..n)
        .map(|i| {
            if i > 0 && rng.random_bool(0.05) {
                return NULLS.choose(rng).unwrap().to_string();
            }
            match shape {
                // under 1% noise on long columns keeps them above the numeric threshold
                Shape::Numeric if noisy && rng.random_bool(0.008) => NOISE.choose(rng).unwrap().to_string(),
                Shape::Numeric => number(rng),
                Shape::Categorical => labels.choose(rng).unwrap().clone(),
            }
        })
        .collect();
    Column { shape, values }
}

fn is_null(v: &str) -> bool {
    let t = v.trim().to_ascii_lowercase();
    t.is_empty() || t == "na" || t == "nan" || t == "null"
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

/// Linear interpolation between closest ranks on sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() as f64 - 1.0) * p;
    let i = h as usize;
    if i + 1 >= sorted.len() {
        return sorted[i];
    }
    sorted[i] * (1.0 - (h - i as f64)) + sorted[i + 1] * (h - i as f64)
}

/// Compares the profiler against naive recomputation; returns the first mismatch.
pub fn check(col: &Column) -> Result<(), String> {
    let p = profile_column("c", &col.values);
    let non_null: Vec<&str> = col.values.iter().map(String::as_str).filter(|v| !is_null(v)).collect();
    if p.null_count != col.values.len() - non_null.len() {
        return Err(format!("null_count {} vs {}", p.null_count, col.values.len() - non_null.len()));
    }
    match col.shape {
        Shape::Numeric => {
            let mut xs: Vec<f64> = non_null.iter().filter_map(|v| v.trim().parse::<f64>().ok()).collect();
            if xs.is_empty() || (xs.len() as f64) < 0.95 * non_null.len() as f64 {
                return Err(format!("generator produced a non-numeric column: {}/{} parse", xs.len(), non_null.len()));
            }
            if p.inferred_type != ColumnType::Numeric {
                return Err(format!("numeric column inferred as {:?}", p.inferred_type));
            }
            let s = p.numeric_stats.ok_or("numeric column without stats")?;
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if s.count != n || s.min != xs[0] || s.max != xs[n - 1] {
                return Err(format!("count/min/max {:?} vs {n}/{}/{}", (s.count, s.min, s.max), xs[0], xs[n - 1]));
            }
            let pairs = [
                ("mean", s.mean, mean),
                ("std", s.std, var.sqrt()),
                ("q1", s.quartiles.q1, quantile(&xs, 0.25)),
                ("q2", s.quartiles.q2, quantile(&xs, 0.5)),
                ("q3", s.quartiles.q3, quantile(&xs, 0.75)),
            ];
            for (name, got, want) in pairs {
                if !close(got, want) {
                    return Err(format!("{name} {got} vs {want}"));
                }
            }
        }
        Shape::Categorical => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for v in &non_null {
                *counts.entry(v).or_insert(0) += 1;
            }
            let distinct = counts.len();
            if non_null.is_empty() {
                return Err("generator produced an all-null column".into());
            }
            if p.inferred_type != ColumnType::Categorical {
                return Err(format!("categorical column with {distinct} labels inferred as {:?}", p.inferred_type));
            }
            let got = p.categorical_stats.as_ref().ok_or("categorical column without stats")?;
            let mut table: Vec<(&str, usize)> = counts.into_iter().collect();
            table.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            let want: Vec<FrequencyEntry> = table.into_iter().take(20).map(|(v, c)| FrequencyEntry::new(v, c)).collect();
            if got.distinct_count != distinct || got.frequency_table != want {
                return Err(format!("frequency table differs: {:?} vs {:?}", got.frequency_table, want));
            }
        }
    }
    Ok(())
}
