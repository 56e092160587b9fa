use std::fmt::Write as _;

use super::{Dataset, DatasetId, ProfileError};

/// Sample values longer than this are truncated with a trailing `...`.
pub const MAX_SAMPLE_CHARS: usize = 60;

const TRUNCATION_MARKER: &str = "...";

/// Renders the plain-text dataset summary given to the language model.
///
/// Per selected dataset (in selection order) the block is three header lines
/// followed by one line per column, `name (type, nulls=k): v1, v2, ...`.
/// Blocks are separated by a blank line.
pub fn summarize_for_llm(datasets: &[Dataset], selected: &[DatasetId]) -> Result<String, ProfileError> {
    if selected.is_empty() {
        return Err(ProfileError::NoDatasetsSelected);
    }
    let mut out = String::new();
    for (i, id) in selected.iter().enumerate() {
        let ds = datasets
            .iter()
            .find(|d| &d.id == id)
            .ok_or_else(|| ProfileError::UnknownDataset(id.clone()))?;
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "Dataset: {} (loaded as `{}`)", one_line(&ds.name), ds.binding_name());
        let _ = writeln!(out, "rows={}, columns={}", ds.row_count, ds.columns.len());
        out.push_str("Columns:\n");
        for col in &ds.columns {
            let _ = write!(
                out,
                "{} ({}, nulls={}):",
                one_line(&col.name),
                col.inferred_type.as_str(),
                col.null_count
            );
            if !col.sample_values.is_empty() {
                let samples: Vec<String> = col.sample_values.iter().map(|v| clip(v)).collect();
                let _ = write!(out, " {}", samples.join(", "));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

fn one_line(s: &str) -> String {
    s.replace('\r', "\\r").replace('\n', "\\n")
}

fn clip(raw: &str) -> String {
    let flat = one_line(raw);
    if flat.chars().count() <= MAX_SAMPLE_CHARS {
        return flat;
    }
    let keep = MAX_SAMPLE_CHARS - TRUNCATION_MARKER.len();
    let mut s: String = flat.chars().take(keep).collect();
    s.push_str(TRUNCATION_MARKER);
    s
}
