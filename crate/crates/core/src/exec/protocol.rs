//! Kernel wire protocol: newline-delimited JSON, one message per line.
//!
//! Requests carry an `op` tag and, except for `ping`, a numeric `id` echoed
//! by the response.

use serde::{Deserialize, Serialize};

/// Maximum number of preview rows in a dataframe snapshot.
pub const PREVIEW_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExecError {
    #[serde(rename = "type")]
    pub error_type: String,
    pub message: String,
    pub traceback: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Scalar,
    Sequence,
    Dataframe,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Preview {
    Table { columns: Vec<String>, rows: Vec<Vec<String>> },
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariableSnapshot {
    pub name: String,
    pub kind: VarKind,
    pub type_label: String,
    pub shape: Option<(u64, u64)>,
    pub preview: Preview,
}

impl VariableSnapshot {
    pub fn preview_text(&self) -> Option<&str> {
        match &self.preview {
            Preview::Text(t) => Some(t),
            Preview::Table { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: Status,
    pub stdout: String,
    pub error: Option<ExecError>,
    /// Base64 PNG images.
    pub images: Vec<String>,
    pub variables: Vec<VariableSnapshot>,
    pub duration_ms: u64,
}

impl ExecutionResult {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSnapshot> {
        self.variables.iter().find(|v| v.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarPage {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub total_matches: u64,
    pub page: u64,
    pub page_size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Execute {
        id: u64,
        code: String,
    },
    FetchVar {
        id: u64,
        name: String,
        #[serde(default)]
        filter: Option<String>,
        page: u64,
        page_size: u64,
    },
    ListVars {
        id: u64,
    },
    Ping,
    Interrupt {
        id: u64,
    },
    Reset {
        id: u64,
    },
}

/// Protocol-level error codes carried by [`Response::Error`].
pub mod codes {
    pub const UNKNOWN_VARIABLE: &str = "UnknownVariable";
    pub const NOT_TABULAR: &str = "NotTabular";
    pub const KERNEL_BUSY: &str = "KernelBusy";
    pub const MALFORMED: &str = "MalformedMessage";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Response {
    Result {
        id: u64,
        #[serde(flatten)]
        result: ExecutionResult,
    },
    VarPage {
        id: u64,
        #[serde(flatten)]
        page: VarPage,
    },
    Vars {
        id: u64,
        variables: Vec<VariableSnapshot>,
    },
    Pong,
    Ack {
        id: u64,
    },
    Error {
        id: Option<u64>,
        code: String,
        message: String,
    },
}

impl Response {
    pub fn id(&self) -> Option<u64> {
        match self {
            Response::Result { id, .. }
            | Response::VarPage { id, .. }
            | Response::Vars { id, .. }
            | Response::Ack { id } => Some(*id),
            Response::Error { id, .. } => *id,
            Response::Pong => None,
        }
    }
}

/// Case-insensitive substring filter over rows followed by paging. Returns
/// the page and the total number of matching rows.
pub fn filter_page(rows: &[Vec<String>], filter: Option<&str>, page: u64, page_size: u64) -> (Vec<Vec<String>>, u64) {
    let needle = filter.unwrap_or("").to_lowercase();
    let matching: Vec<&Vec<String>> = rows
        .iter()
        .filter(|r| needle.is_empty() || r.iter().any(|c| c.to_lowercase().contains(&needle)))
        .collect();
    let total = matching.len() as u64;
    let start = page.saturating_mul(page_size);
    let out = matching
        .into_iter()
        .skip(usize::try_from(start).unwrap_or(usize::MAX))
        .take(usize::try_from(page_size).unwrap_or(usize::MAX))
        .cloned()
        .collect();
    (out, total)
}
