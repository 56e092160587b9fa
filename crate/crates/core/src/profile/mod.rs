//! Dataset ingestion and column profiling.
//!
//! CSV bytes go in, a [`Dataset`] with one [`ColumnProfile`] per header cell
//! comes out. Profiling is a pure function of the input bytes and name: the
//! dataset id is derived from a content hash, so ingesting the same file twice
//! yields bitwise-identical serializations.

pub mod infer;
mod stats;
mod summary;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::parallel::{self, Mode};

pub use infer::{is_null, parse_decimal, ColumnType};
pub use stats::{CategoricalStats, FrequencyEntry, NumericStats, Quartiles, FREQUENCY_TABLE_CAP};
pub use summary::{summarize_for_llm, MAX_SAMPLE_CHARS};

/// Number of distinct sample values kept per column.
pub const SAMPLE_VALUES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProfileError {
    #[error("file has no header row")]
    EmptyFile,
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("unknown dataset {0}")]
    UnknownDataset(DatasetId),
    #[error("no datasets selected")]
    NoDatasetsSelected,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetId(pub String);

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DatasetId {
    fn from(s: &str) -> Self {
        DatasetId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: DatasetId,
    pub name: String,
    pub row_count: usize,
    pub columns: Vec<ColumnProfile>,
    /// Path of the raw CSV relative to the session directory.
    pub source_ref: String,
}

impl Dataset {
    pub fn column(&self, name: &str) -> Option<&ColumnProfile> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Name of the kernel binding the dataset is loaded into, e.g.
    /// `big-basket-products.csv` becomes `df_big_basket_products`.
    pub fn binding_name(&self) -> String {
        binding_name(&self.name)
    }
}

pub fn binding_name(dataset_name: &str) -> String {
    let stem = dataset_name
        .strip_suffix(".csv")
        .or_else(|| dataset_name.strip_suffix(".CSV"))
        .unwrap_or(dataset_name);
    let mut out = String::from("df_");
    for ch in stem.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    while out.ends_with('_') && out.len() > 3 {
        out.pop();
    }
    if out == "df_" {
        out.push_str("data");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub inferred_type: ColumnType,
    pub null_count: usize,
    pub sample_values: Vec<String>,
    pub numeric_stats: Option<NumericStats>,
    pub categorical_stats: Option<CategoricalStats>,
}

/// Profiles one column of raw cell strings.
///
/// Empty strings and the null markers recognised by [`is_null`] count as
/// nulls. The function is total and deterministic.
pub fn profile_column<S: AsRef<str>>(name: &str, values: &[S]) -> ColumnProfile {
    let non_null: Vec<&str> = values
        .iter()
        .map(AsRef::as_ref)
        .filter(|v| !is_null(v))
        .collect();
    let null_count = values.len() - non_null.len();

    let mut seen = HashSet::new();
    let sample_values: Vec<String> = non_null
        .iter()
        .filter(|v| seen.insert(**v))
        .take(SAMPLE_VALUES)
        .map(|v| v.to_string())
        .collect();

    let inferred_type = infer::infer_type(&non_null, values.len());
    let numeric_stats = match inferred_type {
        ColumnType::Numeric => stats::numeric_stats(&non_null),
        _ => None,
    };
    // A numeric column always has at least one parseable value, so the
    // stats above are present; keep the invariant even if that ever changes.
    let inferred_type = if inferred_type == ColumnType::Numeric && numeric_stats.is_none() {
        ColumnType::Text
    } else {
        inferred_type
    };
    let categorical_stats = match inferred_type {
        ColumnType::Categorical | ColumnType::Boolean => Some(stats::categorical_stats(&non_null)),
        _ => None,
    };

    ColumnProfile {
        name: name.to_string(),
        inferred_type,
        null_count,
        sample_values,
        numeric_stats,
        categorical_stats,
    }
}

/// Parses CSV bytes (first row is the header) and profiles every column.
pub fn ingest_csv(raw_bytes: &[u8], name: &str) -> Result<Dataset, ProfileError> {
    ingest_csv_with(raw_bytes, name, Mode::preferred())
}

pub fn ingest_csv_with(raw_bytes: &[u8], name: &str, mode: Mode) -> Result<Dataset, ProfileError> {
    let text = String::from_utf8_lossy(raw_bytes);
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(ProfileError::EmptyFile),
        Some(rec) => rec.map_err(|e| ProfileError::Csv(e.to_string()))?,
    };
    let header: Vec<String> = header.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(ProfileError::EmptyFile);
    }
    let mut names = HashSet::new();
    for h in &header {
        if !names.insert(h.as_str()) {
            return Err(ProfileError::DuplicateColumn(h.clone()));
        }
    }

    let width = header.len();
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); width];
    let mut row_count = 0usize;
    for rec in records {
        let rec = rec.map_err(|e| ProfileError::Csv(e.to_string()))?;
        row_count += 1;
        // Short rows are padded with nulls; cells past the header width are dropped.
        for (i, col) in columns.iter_mut().enumerate() {
            col.push(rec.get(i).unwrap_or("").to_string());
        }
    }

    let profiles = parallel::map_range(mode, width, |i| profile_column(&header[i], &columns[i]));
    let id = dataset_id(name, raw_bytes);
    Ok(Dataset {
        source_ref: format!("datasets/{id}.csv"),
        id,
        name: name.to_string(),
        row_count,
        columns: profiles,
    })
}

fn dataset_id(name: &str, raw_bytes: &[u8]) -> DatasetId {
    let mut hasher = Sha256::new();
    hasher.update(name.as_bytes());
    hasher.update([0u8]);
    hasher.update(raw_bytes);
    let digest = hasher.finalize();
    DatasetId(format!("ds-{}", &hex::encode(digest)[..12]))
}
